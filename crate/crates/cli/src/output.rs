use std::io::Write;
use std::path::Path;

use anyhow::Context;
use mcmpl::data::ClusteredDataset;
use mcmpl::io::{read_dataset, DatasetKind};

/// Writes `text` to `path`, or to standard output.
pub fn write(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

pub fn read(kind: DatasetKind, path: &Path) -> anyhow::Result<ClusteredDataset> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(kind, std::io::BufReader::new(file)).with_context(|| format!("in {}", path.display()))
}
