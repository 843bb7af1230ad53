//! `labels.csv`: one row per sample, `index,class_id,file`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub index: usize,
    pub class_id: usize,
    pub file: String,
}

const HEADER: &str = "index,class_id,file";

pub fn format_labels(rows: &[LabelRow]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.index, r.class_id, r.file));
    }
    out
}

pub fn parse_labels(text: &str) -> Result<Vec<LabelRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse {
            line: line_no,
            message: m.to_string(),
        };
        let mut fields = line.split(',');
        let (Some(idx), Some(class), Some(file), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(err("expected three fields"));
        };
        let index = idx.trim().parse().map_err(|_| err("bad index"))?;
        let class_id = class.trim().parse().map_err(|_| err("bad class id"))?;
        let file = file.trim();
        if file.is_empty() || file.contains('/') || file.contains('\\') || file.starts_with('.') {
            return Err(err("file must be a plain file name"));
        }
        if rows.iter().any(|r: &LabelRow| r.index == index) {
            return Err(err("duplicate index"));
        }
        rows.push(LabelRow {
            index,
            class_id,
            file: file.to_string(),
        });
    }
    Ok(rows)
}
