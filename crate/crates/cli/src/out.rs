//! Deterministic output writers. Floats use Rust's shortest round-trip
//! formatting, so identical values always produce identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use kickwave_core::grid::GridProfile;
use kickwave_core::minimizers::MinimizerTrace;
use serde::Serialize;

pub struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("serializable");
        self.write_text(name, &text)
    }

    /// Profile CSV: a JSON header line followed by `x,value` rows.
    pub fn write_profile(
        &mut self,
        name: &str,
        profile: &GridProfile,
        seed: u64,
        flags: &[&str],
    ) -> io::Result<PathBuf> {
        let header = serde_json::json!({
            "time": profile.time,
            "grid": { "x_min": profile.grid.x_min, "h": profile.grid.h, "count": profile.grid.count },
            "seed": seed,
            "flags": flags,
        });
        let mut text = format!("# {header}\nx,value\n");
        for i in 0..profile.grid.count {
            let _ = writeln!(text, "{},{}", profile.grid.x(i), profile.values[i]);
        }
        self.write_text(name, &text)
    }

    /// Trace CSV (`t,x`) plus a JSON sidecar with the refinement record.
    pub fn write_trace(
        &mut self,
        name: &str,
        trace: &MinimizerTrace,
        extra_flags: &[&str],
    ) -> io::Result<PathBuf> {
        let mut text = String::from("t,x\n");
        for (j, &x) in trace.path.positions.iter().enumerate() {
            let _ = writeln!(text, "{},{x}", trace.path.start_time + j as i64);
        }
        let path = self.write_text(&format!("{name}.csv"), &text)?;
        let mut flags: Vec<&str> = extra_flags.to_vec();
        if trace.boundary_contact {
            flags.push("boundary_contact");
        }
        let sidecar = serde_json::json!({
            "el_res": trace.el_res,
            "refined": trace.refined,
            "source": trace.source,
            "flags": flags,
        });
        self.write_json(&format!("{name}.json"), &sidecar)?;
        Ok(path)
    }
}

/// Build a CSV from a header and formatted rows.
pub fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    text
}
