use std::io::Write;
use std::path::Path;

/// CSV output with leading `#` metadata lines.
#[derive(Debug, Default)]
pub struct Table {
    meta: Vec<(String, String)>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", r.join(","))?;
        }
        w.flush()
    }

    /// Writes to `path`, or to stdout when no path is given.
    pub fn save(&self, path: Option<&Path>) -> std::io::Result<()> {
        match path {
            Some(p) => self.write_to(std::io::BufWriter::new(std::fs::File::create(p)?)),
            None => self.write_to(std::io::stdout().lock()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let mut t = Table::new(&["a", "b"]);
        t.meta("command", "bne");
        t.row(vec![num(0.25), "x".into()]);
        let mut out = Vec::new();
        t.write_to(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "# command=bne\na,b\n2.5000000000000000e-1,x\n");
        assert_eq!(num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
