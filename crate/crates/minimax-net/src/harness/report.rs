//! Aggregates sweep summaries into a plot-ready long-format CSV.

use std::io::Write;
use std::path::Path;

use super::runner::HarnessError;

/// Reads sweep `summary.csv` files and writes one long-format CSV with
/// header `source,value,metric,metric_value`: one row per (summary row,
/// numeric column) pair.
pub fn aggregate(inputs: &[std::path::PathBuf], out: &Path) -> Result<usize, HarnessError> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(out)
            .map_err(|source| HarnessError::Io { path: out.to_path_buf(), source })?,
    );
    let mut rows_written = 0usize;
    writeln!(file, "source,value,metric,metric_value")
        .map_err(|source| HarnessError::Io { path: out.to_path_buf(), source })?;
    for input in inputs {
        let text = std::fs::read_to_string(input)
            .map_err(|source| HarnessError::Io { path: input.clone(), source })?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let columns: Vec<&str> = header.split(',').collect();
        let source = input.file_stem().and_then(|s| s.to_str()).unwrap_or("summary");
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != columns.len() || fields.is_empty() {
                continue;
            }
            for (metric, value) in columns.iter().zip(fields.iter()).skip(1) {
                writeln!(file, "{source},{},{metric},{value}", fields[0])
                    .map_err(|source| HarnessError::Io { path: out.to_path_buf(), source })?;
                rows_written += 1;
            }
        }
    }
    Ok(rows_written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_format_has_one_row_per_metric() {
        let dir = tempfile::tempdir().unwrap();
        let summary = dir.path().join("summary.csv");
        std::fs::write(
            &summary,
            "value,min_grad_phi_norm_sq,avg_grad_phi_norm_sq,samples,comms\n\
             0.001,1.0e-5,2.0e-4,800,200\n\
             0.01,5.0e-6,1.0e-4,800,200\n",
        )
        .unwrap();
        let out = dir.path().join("long.csv");
        let rows = aggregate(&[summary], &out).unwrap();
        assert_eq!(rows, 8); // 2 rows x 4 numeric columns
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("source,value,metric,metric_value"));
        assert!(text.contains("summary,0.001,min_grad_phi_norm_sq,1.0e-5"));
    }
}
