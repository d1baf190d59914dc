use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

/// One file of a run, held in memory until every computation has succeeded.
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// CSV table with a `#` provenance header.
pub struct Table {
    header: Vec<String>,
    columns: String,
    rows: String,
}

impl Table {
    pub fn new(description: &str, columns: &[&str]) -> Self {
        Table { header: vec![description.to_string()], columns: columns.join(","), rows: String::new() }
    }

    pub fn note(&mut self, line: impl Into<String>) -> &mut Self {
        self.header.push(line.into());
        self
    }

    pub fn row(&mut self, values: &[f64]) {
        let line: Vec<String> = values.iter().map(|&v| number(v)).collect();
        self.rows.push_str(&line.join(","));
        self.rows.push('\n');
    }

    pub fn raw_row(&mut self, fields: &[String]) {
        self.rows.push_str(&fields.join(","));
        self.rows.push('\n');
    }

    pub fn finish(self, name: &str, provenance: &[String]) -> OutputFile {
        let mut s = String::new();
        for line in self.header.iter().chain(provenance) {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str(&self.columns);
        s.push('\n');
        s.push_str(&self.rows);
        OutputFile { name: name.to_string(), contents: s }
    }
}

/// Shortest round-trip form, switching to exponent notation outside [1e-4, 1e7).
pub fn number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e7).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// One curve of a plot script: data file, gnuplot `using` expression, title.
pub struct Series {
    pub file: String,
    pub using: String,
    pub title: String,
}

impl Series {
    pub fn new(file: &str, using: impl Into<String>, title: impl Into<String>) -> Self {
        Series { file: file.to_string(), using: using.into(), title: title.into() }
    }
}

/// A gnuplot script drawing `series`.
pub fn plot_script(name: &str, xlabel: &str, ylabel: &str, logy: bool, series: &[Series]) -> OutputFile {
    let mut s = String::from("# gnuplot script; run `gnuplot -p ");
    s.push_str(name);
    s.push_str("`\nset datafile separator ','\nset datafile commentschars '#'\n");
    let _ = writeln!(s, "set xlabel '{xlabel}'\nset ylabel '{ylabel}'");
    if logy {
        s.push_str("set logscale y\n");
    }
    s.push_str("plot \\\n");
    let parts: Vec<String> = series
        .iter()
        .map(|c| format!("  '{}' every ::1 using {} with linespoints title '{}'", c.file, c.using, c.title))
        .collect();
    s.push_str(&parts.join(", \\\n"));
    s.push('\n');
    OutputFile { name: name.to_string(), contents: s }
}

pub fn write_all(dir: &Path, files: &[OutputFile]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::new("io", format!("{}: {e}", dir.display())))?;
    for f in files {
        let path = dir.join(&f.name);
        let tmp = dir.join(format!(".{}.partial", f.name));
        std::fs::write(&tmp, &f.contents)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    }
    Ok(())
}
