//! Alignment TSV, one syllable per row:
//!
//! ```text
//! utt_id dataset speaker word_id word_text syll_idx start_s end_s stress phonemes nucleus_idx follows_pause precedes_pause
//! ```
//!
//! `phonemes` is a space-separated list of `sym:start:end`. Words failing
//! validation are rejected individually and reported with the offending line.

use std::collections::{BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::Path;

use super::{
    category_of, CorpusError, Dataset, Phoneme, PhonemeCategory, Stress, Syllable, Utterance, Word,
};

pub const COLUMNS: [&str; 13] = [
    "utt_id",
    "dataset",
    "speaker",
    "word_id",
    "word_text",
    "syll_idx",
    "start_s",
    "end_s",
    "stress",
    "phonemes",
    "nucleus_idx",
    "follows_pause",
    "precedes_pause",
];

/// A row or word that could not be accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub utt_id: Option<String>,
    pub word_id: Option<String>,
    pub message: String,
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        if let (Some(u), Some(w)) = (&self.utt_id, &self.word_id) {
            write!(f, " ({u}/{w})")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedCorpus {
    pub utterances: Vec<Utterance>,
    pub rejected: Vec<RecordError>,
}

struct Row {
    line: usize,
    dataset: Dataset,
    speaker: String,
    text: String,
    syllable: Syllable,
    follows_pause: bool,
    precedes_pause: bool,
}

pub fn parse_alignments(path: impl AsRef<Path>) -> Result<ParsedCorpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_alignments_str(&text))
}

pub fn parse_alignments_str(text: &str) -> ParsedCorpus {
    let mut rejected = Vec::new();
    // Insertion-ordered grouping: utterance -> word -> rows.
    let mut utt_order: Vec<String> = Vec::new();
    let mut words_of: HashMap<String, Vec<String>> = HashMap::new();
    let mut rows_of: HashMap<(String, String), Vec<Row>> = HashMap::new();
    let mut bad_words: BTreeSet<(String, String)> = BTreeSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("utt_id\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let key = (cols.len() >= 4).then(|| (cols[0].to_string(), cols[3].to_string()));
        match parse_row(&cols, line_no) {
            Ok(row) => {
                let (utt, word) = key.expect("parsed rows have 13 columns");
                if !words_of.contains_key(&utt) {
                    utt_order.push(utt.clone());
                }
                let ws = words_of.entry(utt.clone()).or_default();
                if !ws.contains(&word) {
                    ws.push(word.clone());
                }
                rows_of.entry((utt, word)).or_default().push(row);
            }
            Err(message) => {
                if let Some(k) = &key {
                    bad_words.insert(k.clone());
                }
                rejected.push(RecordError {
                    line: line_no,
                    utt_id: key.as_ref().map(|k| k.0.clone()),
                    word_id: key.as_ref().map(|k| k.1.clone()),
                    message,
                });
            }
        }
    }

    let mut utterances = Vec::new();
    for utt_id in utt_order {
        let mut header: Option<(Dataset, String, usize)> = None;
        let mut words = Vec::new();
        for word_id in &words_of[&utt_id] {
            let key = (utt_id.clone(), word_id.clone());
            let rows = rows_of.remove(&key).unwrap_or_default();
            if bad_words.contains(&key) {
                continue;
            }
            let first_line = rows.first().map_or(0, |r| r.line);
            let reject = |message: String| RecordError {
                line: first_line,
                utt_id: Some(utt_id.clone()),
                word_id: Some(word_id.clone()),
                message,
            };
            if let Some((ds, spk, line)) = &header {
                if let Some(r) = rows.iter().find(|r| r.dataset != *ds || &r.speaker != spk) {
                    rejected.push(reject(format!(
                        "dataset/speaker on line {} disagree with line {line}",
                        r.line
                    )));
                    continue;
                }
            }
            match assemble_word(word_id, rows) {
                Ok((word, ds, spk)) => {
                    header.get_or_insert((ds, spk, first_line));
                    words.push(word);
                }
                Err(message) => rejected.push(reject(message)),
            }
        }
        if let Some((dataset, speaker, _)) = header {
            utterances.push(Utterance {
                audio_path: format!("{utt_id}.wav"),
                id: utt_id,
                dataset,
                speaker,
                sample_rate: crate::audio::PIPELINE_SAMPLE_RATE,
                words,
            });
        }
    }
    rejected.sort_by_key(|r| r.line);
    ParsedCorpus {
        utterances,
        rejected,
    }
}

fn assemble_word(word_id: &str, mut rows: Vec<Row>) -> Result<(Word, Dataset, String), String> {
    rows.sort_by_key(|r| r.syllable.index);
    for (expected, r) in rows.iter().enumerate() {
        if r.syllable.index != expected {
            return Err(format!(
                "syllable indices must be 0..{} without gaps or repeats (line {})",
                rows.len(),
                r.line
            ));
        }
    }
    let first = &rows[0];
    if let Some(r) = rows.iter().find(|r| {
        r.text != first.text
            || r.follows_pause != first.follows_pause
            || r.precedes_pause != first.precedes_pause
            || r.dataset != first.dataset
            || r.speaker != first.speaker
    }) {
        return Err(format!("word-level columns on line {} disagree", r.line));
    }
    for pair in rows.windows(2) {
        if pair[1].syllable.start < pair[0].syllable.end {
            return Err(format!(
                "overlapping syllables on lines {} and {}",
                pair[0].line, pair[1].line
            ));
        }
    }
    let stressed = rows
        .iter()
        .filter(|r| r.syllable.stress == Stress::Stressed)
        .count();
    if stressed != 1 {
        return Err(format!(
            "word must have exactly one stressed syllable, found {stressed}"
        ));
    }
    let dataset = first.dataset;
    let speaker = first.speaker.clone();
    let word = Word {
        id: word_id.to_string(),
        text: first.text.clone(),
        follows_pause: first.follows_pause,
        precedes_pause: first.precedes_pause,
        syllables: rows.into_iter().map(|r| r.syllable).collect(),
    };
    Ok((word, dataset, speaker))
}

fn parse_row(cols: &[&str], line: usize) -> Result<Row, String> {
    if cols.len() != COLUMNS.len() {
        return Err(format!(
            "expected {} tab-separated columns, found {}",
            COLUMNS.len(),
            cols.len()
        ));
    }
    let field = |i: usize| cols[i].trim();
    if field(0).is_empty() || field(3).is_empty() {
        return Err("utt_id and word_id must be non-empty".into());
    }
    let dataset: Dataset = field(1).parse()?;
    let index: usize = field(5)
        .parse()
        .map_err(|_| format!("syll_idx: not an integer: {:?}", field(5)))?;
    let start = parse_time(field(6), "start_s")?;
    let end = parse_time(field(7), "end_s")?;
    if end <= start {
        return Err(format!("syllable end {end} must exceed start {start}"));
    }
    let stress = match field(8) {
        "1" => Stress::Stressed,
        "0" => Stress::Unstressed,
        other => return Err(format!("stress must be 0|1, got {other:?}")),
    };
    let phonemes = parse_phonemes(field(9))?;
    for p in &phonemes {
        if p.start < start || p.end > end {
            return Err(format!(
                "phoneme {} [{}, {}) lies outside syllable [{start}, {end})",
                p.symbol, p.start, p.end
            ));
        }
    }
    let nucleus_index: usize = field(10)
        .parse()
        .map_err(|_| format!("nucleus_idx: not an integer: {:?}", field(10)))?;
    if nucleus_index >= phonemes.len() {
        return Err(format!(
            "nucleus_idx {nucleus_index} out of range for {} phonemes",
            phonemes.len()
        ));
    }
    let degenerate = phonemes[nucleus_index].category != PhonemeCategory::Vowel;
    Ok(Row {
        line,
        dataset,
        speaker: field(2).to_string(),
        text: field(4).to_string(),
        syllable: Syllable {
            index,
            start,
            end,
            phonemes,
            nucleus_index,
            stress,
            degenerate,
        },
        follows_pause: parse_flag(field(11), "follows_pause")?,
        precedes_pause: parse_flag(field(12), "precedes_pause")?,
    })
}

fn parse_time(s: &str, name: &str) -> Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|_| format!("{name}: not a number: {s:?}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("{name}: must be finite and >= 0, got {s}"));
    }
    Ok(v)
}

fn parse_flag(s: &str, name: &str) -> Result<bool, String> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("{name} must be 0|1, got {other:?}")),
    }
}

fn parse_phonemes(s: &str) -> Result<Vec<Phoneme>, String> {
    let mut out = Vec::new();
    for tok in s.split_whitespace() {
        let mut parts = tok.split(':');
        let (Some(sym), Some(a), Some(b), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(format!("phoneme {tok:?} is not sym:start:end"));
        };
        let category = category_of(sym).ok_or_else(|| format!("unknown phoneme symbol {sym:?}"))?;
        let start = parse_time(a, "phoneme start")?;
        let end = parse_time(b, "phoneme end")?;
        if end <= start {
            return Err(format!("phoneme {sym} end {end} must exceed start {start}"));
        }
        out.push(Phoneme {
            symbol: sym.to_string(),
            category,
            start,
            end,
        });
    }
    if out.is_empty() {
        return Err("syllable has no phonemes".into());
    }
    Ok(out)
}

/// Serialises utterances back to the alignment TSV (with header).
pub fn write_alignments(utterances: &[Utterance]) -> String {
    let mut s = COLUMNS.join("\t");
    s.push('\n');
    for u in utterances {
        for w in &u.words {
            for syl in &w.syllables {
                let phonemes: Vec<String> = syl
                    .phonemes
                    .iter()
                    .map(|p| format!("{}:{}:{}", p.symbol, p.start, p.end))
                    .collect();
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    u.id,
                    u.dataset,
                    u.speaker,
                    w.id,
                    w.text,
                    syl.index,
                    syl.start,
                    syl.end,
                    syl.stress.label(),
                    phonemes.join(" "),
                    syl.nucleus_index,
                    u8::from(w.follows_pause),
                    u8::from(w.precedes_pause),
                );
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PERMIT: &str = "\
u1\tGER\tspk1\tw1\tpermit\t0\t0.10\t0.25\t1\tp:0.10:0.15 ah:0.15:0.25\t1\t1\t0
u1\tGER\tspk1\tw1\tpermit\t1\t0.25\t0.50\t0\tm:0.25:0.32 ih:0.32:0.42 t:0.42:0.50\t1\t1\t0
";

    #[test]
    fn parses_permit() {
        let parsed = parse_alignments_str(PERMIT);
        assert!(parsed.rejected.is_empty(), "{:?}", parsed.rejected);
        assert_eq!(parsed.utterances.len(), 1);
        let w = &parsed.utterances[0].words[0];
        assert_eq!(w.text, "permit");
        assert_eq!(
            w.syllables.iter().map(|s| s.stress).collect::<Vec<_>>(),
            vec![Stress::Stressed, Stress::Unstressed]
        );
        assert_eq!(w.syllables[1].nucleus().symbol, "ih");
        assert!(w.follows_pause && !w.precedes_pause);
        assert_eq!(parsed.utterances[0].dataset, Dataset::Ger);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let parsed = parse_alignments_str("");
        assert!(parsed.utterances.is_empty());
        assert!(parsed.rejected.is_empty());
    }

    #[test]
    fn double_stress_rejects_only_that_word() {
        let text = format!(
            "{PERMIT}\
u1\tGER\tspk1\tw2\trecord\t0\t0.60\t0.80\t1\tr:0.60:0.65 eh:0.65:0.80\t1\t0\t1
u1\tGER\tspk1\tw2\trecord\t1\t0.80\t1.00\t1\tk:0.80:0.85 er:0.85:1.00\t1\t0\t1
"
        );
        let parsed = parse_alignments_str(&text);
        assert_eq!(parsed.utterances[0].words.len(), 1);
        assert_eq!(parsed.utterances[0].words[0].id, "w1");
        assert_eq!(parsed.rejected.len(), 1);
        assert_eq!(parsed.rejected[0].word_id.as_deref(), Some("w2"));
        assert!(parsed.rejected[0].message.contains("exactly one stressed"));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = format!("{PERMIT}u2\tGER\tspk1\tw9\tbad\t0\t0.1\n");
        let parsed = parse_alignments_str(&text);
        assert_eq!(parsed.rejected.len(), 1);
        assert_eq!(parsed.rejected[0].line, 3);
        assert_eq!(parsed.utterances.len(), 1);
    }

    #[test]
    fn overlapping_syllables_rejected() {
        let text = "\
u1\tITA\ts\tw1\tx\t0\t0.10\t0.30\t1\tah:0.10:0.30\t0\t1\t1
u1\tITA\ts\tw1\tx\t1\t0.25\t0.50\t0\tih:0.25:0.50\t0\t1\t1
";
        let parsed = parse_alignments_str(text);
        assert!(parsed.utterances.is_empty());
        assert!(parsed.rejected[0].message.contains("overlapping"));
    }

    #[test]
    fn unknown_phoneme_and_bad_nucleus_rejected() {
        let text = "\
u1\tITA\ts\tw1\tx\t0\t0.10\t0.30\t1\tqq:0.10:0.30\t0\t1\t1
u1\tITA\ts\tw2\tx\t0\t0.40\t0.50\t1\tah:0.40:0.50\t3\t1\t1
";
        let parsed = parse_alignments_str(text);
        assert_eq!(parsed.rejected.len(), 2);
        assert!(parsed.rejected[0].message.contains("unknown phoneme"));
        assert!(parsed.rejected[1].message.contains("nucleus_idx"));
    }

    #[test]
    fn degenerate_nucleus_flagged() {
        let text = "\
u1\tGER\ts\tw1\tbutton\t0\t0.10\t0.30\t1\tb:0.10:0.15 ah:0.15:0.30\t1\t1\t1
u1\tGER\ts\tw1\tbutton\t1\t0.30\t0.50\t0\tt:0.30:0.35 en:0.35:0.50\t1\t1\t1
";
        let parsed = parse_alignments_str(text);
        let w = &parsed.utterances[0].words[0];
        assert!(!w.syllables[0].degenerate);
        assert!(w.syllables[1].degenerate);
    }

    #[test]
    fn write_then_parse_round_trips() {
        let parsed = parse_alignments_str(PERMIT);
        let again = parse_alignments_str(&write_alignments(&parsed.utterances));
        assert_eq!(again, parsed);
    }

    fn arb_corpus_text() -> impl Strategy<Value = (String, Vec<usize>)> {
        // Words with 1..5 syllables and a stress count of 0..3 each.
        prop::collection::vec((1usize..5, 0usize..3, 0usize..4), 1..12).prop_map(|words| {
            let mut text = String::new();
            let mut stress_counts = Vec::new();
            let mut t = 0.0f64;
            for (wi, (n, stresses, offset)) in words.into_iter().enumerate() {
                let stresses = stresses.min(n);
                stress_counts.push(stresses);
                for s in 0..n {
                    let stressed = (s + offset) % n < stresses;
                    let start = t;
                    let end = t + 0.125;
                    t = end;
                    text.push_str(&format!(
                        "u{}\tSYNTH\tspk\tw{wi}\tword\t{s}\t{start}\t{end}\t{}\tah:{start}:{end}\t0\t1\t0\n",
                        wi % 3,
                        u8::from(stressed)
                    ));
                }
            }
            (text, stress_counts)
        })
    }

    proptest! {
        #[test]
        fn parsed_words_have_exactly_one_stress((text, counts) in arb_corpus_text()) {
            let parsed = parse_alignments_str(&text);
            let accepted: usize = parsed.utterances.iter().map(|u| u.words.len()).sum();
            prop_assert_eq!(accepted, counts.iter().filter(|&&c| c == 1).count());
            prop_assert_eq!(parsed.rejected.len(), counts.iter().filter(|&&c| c != 1).count());
            for u in &parsed.utterances {
                for w in &u.words {
                    prop_assert_eq!(w.labels().iter().filter(|&&l| l == 1).count(), 1);
                }
            }
        }
    }
}
