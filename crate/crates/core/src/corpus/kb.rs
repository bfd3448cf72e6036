use super::data::KbRecord;
use super::tokenize::canonicalize;

pub const KB_MARKER: &str = "<kb>";

/// Flat text form of a KB: per record, the marker followed by
/// `field value` pairs in stored order. Fields and values are canonicalized
/// to single tokens. An empty KB serializes to the empty string.
pub fn serialize_kb(kb: &[KbRecord]) -> String {
    let mut parts: Vec<String> = Vec::new();
    for rec in kb {
        parts.push(KB_MARKER.to_string());
        for (f, v) in rec.pairs() {
            parts.push(canonicalize(f));
            parts.push(canonicalize(v));
        }
    }
    parts.join(" ")
}

/// Inverse of [`serialize_kb`] for canonical input.
pub fn parse_kb(text: &str) -> Option<Vec<KbRecord>> {
    let mut out = Vec::new();
    let mut toks = text.split_whitespace().peekable();
    while let Some(t) = toks.next() {
        if t != KB_MARKER {
            return None;
        }
        let mut pairs = Vec::new();
        while let Some(&f) = toks.peek() {
            if f == KB_MARKER {
                break;
            }
            toks.next();
            let v = toks.next()?;
            pairs.push((f.to_string(), v.to_string()));
        }
        out.push(KbRecord::new(pairs).ok()?);
    }
    Some(out)
}
