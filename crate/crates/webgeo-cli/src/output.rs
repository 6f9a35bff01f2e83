//! Output writers. Every file starts with a provenance line carrying the
//! tool version and the config hash.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct OutputContext {
    pub dir: PathBuf,
    pub config_hash: u64,
    pub seed: u64,
}

impl OutputContext {
    pub fn new(dir: &Path, config_hash: u64, seed: u64) -> std::io::Result<OutputContext> {
        fs::create_dir_all(dir)?;
        Ok(OutputContext {
            dir: dir.to_path_buf(),
            config_hash,
            seed,
        })
    }

    fn header(&self) -> String {
        format!(
            "# webgeo {VERSION} config_hash={:016x} seed={}\n",
            self.config_hash, self.seed
        )
    }

    pub fn write_csv(
        &self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<f64>],
    ) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path)?;
        f.write_all(self.header().as_bytes())?;
        writeln!(f, "{}", columns.join(","))?;
        for row in rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(f, "{}", line.join(","))?;
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, payload: &T) -> std::io::Result<PathBuf> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            version: &'a str,
            config_hash: String,
            seed: u64,
            #[serde(flatten)]
            payload: &'a T,
        }
        let path = self.dir.join(name);
        let body = serde_json::to_string_pretty(&Envelope {
            version: VERSION,
            config_hash: format!("{:016x}", self.config_hash),
            seed: self.seed,
            payload,
        })
        .expect("serializable payload");
        fs::write(&path, body + "\n")?;
        Ok(path)
    }
}
