use serde::{Deserialize, Serialize};

/// Broad ARPAbet phoneme classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhonemeCategory {
    Vowel,
    Plosive,
    Fricative,
    Affricate,
    Nasal,
    Approximant,
    Silence,
}

/// Vowel quality classes used for the nucleus part of the context vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NucleusClass {
    ShortMonophthong,
    LongMonophthong,
    Diphthong,
    SyllabicConsonant,
}

/// Lower-cases and strips ARPAbet stress digits ("AH1" -> "ah").
pub fn normalize_symbol(sym: &str) -> String {
    sym.trim_end_matches(|c: char| c.is_ascii_digit())
        .to_ascii_lowercase()
}

pub fn category_of(sym: &str) -> Option<PhonemeCategory> {
    use PhonemeCategory::*;
    let s = normalize_symbol(sym);
    let cat = match s.as_str() {
        "aa" | "ae" | "ah" | "ao" | "aw" | "ax" | "axr" | "ay" | "eh" | "er" | "ey" | "ih"
        | "ix" | "iy" | "ow" | "oy" | "uh" | "uw" | "ux" => Vowel,
        "p" | "b" | "t" | "d" | "k" | "g" | "dx" | "q" => Plosive,
        "f" | "v" | "th" | "dh" | "s" | "z" | "sh" | "zh" | "hh" => Fricative,
        "ch" | "jh" => Affricate,
        "m" | "n" | "ng" | "nx" | "em" | "en" | "eng" => Nasal,
        "l" | "r" | "w" | "y" | "el" => Approximant,
        "sil" | "sp" | "spn" | "pau" => Silence,
        _ => return None,
    };
    Some(cat)
}

/// Nucleus class of a phoneme. Non-vowels fall into the syllabic-consonant class.
pub fn nucleus_class_of(sym: &str) -> NucleusClass {
    match normalize_symbol(sym).as_str() {
        "ih" | "eh" | "ae" | "ah" | "uh" | "ax" | "ix" | "ux" => NucleusClass::ShortMonophthong,
        "iy" | "uw" | "aa" | "ao" | "er" | "axr" => NucleusClass::LongMonophthong,
        "ey" | "ay" | "ow" | "aw" | "oy" => NucleusClass::Diphthong,
        _ => NucleusClass::SyllabicConsonant,
    }
}
