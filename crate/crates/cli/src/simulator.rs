use std::path::PathBuf;
use std::process::Command;

use mfk_core::sequential::Simulator;

/// Runs an external program once per evaluation.
#[derive(Debug, Clone)]
pub struct CommandSimulator {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub levels: usize,
}

impl Simulator for CommandSimulator {
    fn levels(&self) -> usize {
        self.levels
    }

    fn evaluate(&self, level: usize, x: &[f64]) -> Result<f64, String> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(level.to_string())
            .args(x.iter().map(|v| format!("{v:.16e}")))
            .output()
            .map_err(|e| format!("{}: {e}", self.program.display()))?;
        if !out.status.success() {
            return Err(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        let text = String::from_utf8_lossy(&out.stdout);
        text.trim()
            .parse::<f64>()
            .map_err(|e| format!("unparsable output {:?}: {e}", text.trim()))
    }
}
