use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::analysis::NounPair;
use crate::error::{Error, Result};
use crate::metrics::least_squares;

pub const NOUN_REPORT_HEADER: [&str; 5] = ["noun", "count_a", "mean_a", "count_b", "mean_b"];

/// Writes the paired table as `noun,count_a,mean_a,count_b,mean_b`.
pub fn write_noun_table(pairs: &[NounPair], csv_path: &Path) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput { op: "noun report" });
    }
    let mut w = csv::Writer::from_path(csv_path)?;
    w.write_record(NOUN_REPORT_HEADER)?;
    for p in pairs {
        w.write_record([
            p.noun.clone(),
            p.count_a.to_string(),
            p.mean_a.to_string(),
            p.count_b.to_string(),
            p.mean_b.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))
}

/// Scatter plot of `mean_a` against `mean_b` with the least-squares line.
/// The fitted slope and intercept are stored in the `<metadata id="fit">` element.
pub fn write_noun_plot(pairs: &[NounPair], svg_path: &Path, labels: (&str, &str)) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput { op: "noun report" });
    }
    std::fs::write(svg_path, scatter_svg(pairs, labels)).map_err(|e| Error::io(svg_path, e))
}

/// Writes the table to `csv_path` and the plot next to it with an `.svg`
/// extension, returning the plot path.
pub fn emit_noun_report(pairs: &[NounPair], csv_path: &Path, labels: (&str, &str)) -> Result<PathBuf> {
    write_noun_table(pairs, csv_path)?;
    let svg_path = csv_path.with_extension("svg");
    write_noun_plot(pairs, &svg_path, labels)?;
    Ok(svg_path)
}

pub fn read_noun_report(path: &Path) -> Result<Vec<NounPair>> {
    let err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != NOUN_REPORT_HEADER {
        return Err(err(1, format!("expected header `{}`", NOUN_REPORT_HEADER.join(","))));
    }
    reader
        .records()
        .map(|row| {
            let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let num = |i: usize| -> Result<f64> {
                row[i]
                    .parse()
                    .map_err(|_| err(line, format!("bad {} `{}`", NOUN_REPORT_HEADER[i], &row[i])))
            };
            let int = |i: usize| -> Result<usize> {
                row[i]
                    .parse()
                    .map_err(|_| err(line, format!("bad {} `{}`", NOUN_REPORT_HEADER[i], &row[i])))
            };
            Ok(NounPair {
                noun: row[0].to_string(),
                count_a: int(1)?,
                mean_a: num(2)?,
                count_b: int(3)?,
                mean_b: num(4)?,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn scatter_svg(pairs: &[NounPair], (label_a, label_b): (&str, &str)) -> String {
    const SIZE: f64 = 480.0;
    const PAD: f64 = 48.0;
    let span = SIZE - 2.0 * PAD;
    let x = |v: f64| PAD + v.clamp(0.0, 1.0) * span;
    let y = |v: f64| SIZE - PAD - v.clamp(0.0, 1.0) * span;
    let xs: Vec<f64> = pairs.iter().map(|p| p.mean_a).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.mean_b).collect();
    let fit = least_squares(&xs, &ys).ok();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    match fit {
        Some((slope, intercept)) => {
            let _ = writeln!(
                s,
                r#"<metadata id="fit" data-slope="{slope}" data-intercept="{intercept}" data-n="{}"/>"#,
                pairs.len()
            );
        }
        None => {
            let _ = writeln!(
                s,
                r#"<metadata id="fit" data-slope="NA" data-intercept="NA" data-n="{}"/>"#,
                pairs.len()
            );
        }
    }
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black"><line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}"/></g>"#,
        b = SIZE - PAD,
        r = SIZE - PAD
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{t}</text><text x="{}" y="{}" font-size="10" text-anchor="end">{t}</text>"#,
            x(t),
            SIZE - PAD + 14.0,
            PAD - 4.0,
            y(t) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 10.0,
        escape(label_a)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(label_b)
    );
    let _ = writeln!(s, r#"<g fill="steelblue" fill-opacity="0.7">"#);
    for p in pairs {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3"><title>{}</title></circle>"#,
            x(p.mean_a),
            y(p.mean_b),
            escape(&p.noun)
        );
    }
    let _ = writeln!(s, "</g>");
    if let Some((slope, intercept)) = fit {
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-width="1.5"/>"#,
            x(0.0),
            y(intercept),
            x(1.0),
            y(slope + intercept)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Vec<NounPair> {
        [("cat", 0.1, 0.3), ("dog", 0.5, 0.4), ("sky", 0.9, 0.8)]
            .iter()
            .map(|&(n, a, b)| NounPair {
                noun: n.into(),
                count_a: 2,
                mean_a: a,
                count_b: 3,
                mean_b: b,
            })
            .collect()
    }

    #[test]
    fn csv_rows_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("nouns.csv");
        let svg = emit_noun_report(&pairs(), &csv, ("a", "b")).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(read_noun_report(&csv).unwrap(), pairs());
        assert!(std::fs::read_to_string(svg).unwrap().starts_with("<svg"));
    }

    #[test]
    fn empty_table_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_noun_report(&[], &dir.path().join("x.csv"), ("a", "b")).is_err());
    }
}
