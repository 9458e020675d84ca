//! Tables printed as aligned text or comma-delimited rows.

use crate::Format;

/// Four decimals, or `-` when absent.
pub fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub struct Table {
    pub title: Option<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(title: Option<String>, header: &[&str]) -> Self {
        Self {
            title,
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.render_text(),
            Format::Delimited => self.render_delimited(),
        }
    }

    fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(String::len).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = String::new();
        if let Some(t) = &self.title {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str(&line(&self.header));
        for row in &self.rows {
            out.push_str(&line(row));
        }
        out
    }

    fn render_delimited(&self) -> String {
        let escape = |c: &String| {
            if c.contains([',', '"', '\n']) {
                format!("\"{}\"", c.replace('"', "\"\""))
            } else {
                c.clone()
            }
        };
        let mut out = String::new();
        if let Some(t) = &self.title {
            out.push_str(&format!("# {t}\n"));
        }
        for row in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&row.iter().map(escape).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Tables separated by blank lines.
pub fn render_all(tables: &[Table], format: Format) -> String {
    tables.iter().map(|t| t.render(format)).collect::<Vec<_>>().join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_both_formats() {
        let mut t = Table::new(Some("demo".into()), &["a", "bb"]);
        t.push(vec!["1".into(), num(Some(0.123456))]);
        t.push(vec!["x,y".into(), num(None)]);
        assert_eq!(t.render(Format::Text), "demo\na    bb\n1    0.1235\nx,y  -\n");
        assert_eq!(t.render(Format::Delimited), "# demo\na,bb\n1,0.1235\n\"x,y\",-\n");
    }
}
