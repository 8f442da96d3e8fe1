use std::io::{self, Write};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub iteration: u64,
    pub dirichlet_energy: f64,
    pub solver_residual: f64,
    pub dual_min: f64,
    pub dual_max: f64,
}

/// Per-iteration solver diagnostics, dumpable as CSV.
#[derive(Clone, Debug, Default)]
pub struct DiagnosticsLog {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsLog {
    pub fn push(&mut self, row: DiagnosticsRow) {
        self.rows.push(row);
    }

    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "iteration,dirichlet_energy,solver_residual,dual_min,dual_max")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{},{}",
                r.iteration, r.dirichlet_energy, r.solver_residual, r.dual_min, r.dual_max
            )?;
        }
        Ok(())
    }
}
