//! CSV artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::observables::MarginalEstimate;
use crate::process::EventCounters;
use crate::uu::DensityField;

pub const FIELD_HEADER: &str = "t,vx,vy,vz,f";
pub const EVENTS_HEADER: &str =
    "n_particles,t,proposed,kernel_rejected,exclusion_blocked,accepted,acceptance_ratio";

fn suffix(t: f64, n: Option<usize>) -> String {
    match n {
        Some(n) => format!("t{t}_N{n}"),
        None => format!("t{t}"),
    }
}

/// `marginal_k{k}_t{t}[_N{n}].csv`.
pub fn write_marginal(dir: &Path, est: &MarginalEstimate, t: f64, n: Option<usize>) -> Result<()> {
    let path = dir.join(format!("marginal_k{}_{}.csv", est.k(), suffix(t, n)));
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", est.csv_header())?;
    est.write_csv_rows(t, &mut w)?;
    w.flush()?;
    Ok(())
}

/// `uu_field_t{t}.csv`, nodes in storage order.
pub fn write_field(dir: &Path, field: &DensityField, t: f64) -> Result<()> {
    let path = dir.join(format!("uu_field_{}.csv", suffix(t, None)));
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{FIELD_HEADER}")?;
    let g = field.grid();
    for (i, f) in field.values().iter().enumerate() {
        let v = g.node(i);
        writeln!(w, "{t},{},{},{},{f:e}", v.x, v.y, v.z)?;
    }
    w.flush()?;
    Ok(())
}

/// Event counters per snapshot interval, summed over replicas.
#[derive(Debug, Default)]
pub struct EventsTable {
    rows: Vec<(usize, f64, EventCounters)>,
}

impl EventsTable {
    pub fn push(&mut self, n: usize, t: f64, c: EventCounters) {
        self.rows.push((n, t, c));
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join("events.csv"))?);
        writeln!(w, "{EVENTS_HEADER}")?;
        for (n, t, c) in &self.rows {
            let ratio = if c.proposed > 0 {
                c.accepted as f64 / c.proposed as f64
            } else {
                0.0
            };
            writeln!(
                w,
                "{n},{t},{},{},{},{},{ratio:e}",
                c.proposed, c.kernel_rejected, c.exclusion_blocked, c.accepted
            )?;
        }
        w.flush()?;
        Ok(())
    }
}
