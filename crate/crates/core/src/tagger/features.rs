//! Hand-engineered token features for the CRF.

use std::sync::OnceLock;

use regex::Regex;

const BOS: &str = "<s>";
const EOS: &str = "</s>";

fn nomenclature() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        // V600E, Val600Glu, R175H*, and HGVS-prefixed forms like c.1799T>A.
        Regex::new(r"^(?:[A-Za-z]{1,3}[0-9]+[A-Za-z*]{1,3}|[cpgCPG]\.\S+)$").unwrap()
    })
}

/// Collapsed character-class shape: `V599E` -> `A0A`, `p.G12D` -> `a.A0A`.
pub fn word_shape(token: &str) -> String {
    let mut shape = String::new();
    for c in token.chars() {
        let class = if c.is_uppercase() {
            'A'
        } else if c.is_lowercase() {
            'a'
        } else if c.is_ascii_digit() {
            '0'
        } else {
            c
        };
        if !shape.ends_with(class) {
            shape.push(class);
        }
    }
    shape
}

pub fn is_mutation_nomenclature(token: &str) -> bool {
    nomenclature().is_match(token)
}

fn window_word<S: AsRef<str>>(tokens: &[S], position: isize) -> String {
    if position < 0 {
        BOS.to_string()
    } else if position as usize >= tokens.len() {
        EOS.to_string()
    } else {
        tokens[position as usize].as_ref().to_lowercase()
    }
}

/// Feature strings for the token at `position`.
///
/// # Panics
///
/// Panics if `position` is out of bounds.
pub fn extract_features<S: AsRef<str>>(tokens: &[S], position: usize) -> Vec<String> {
    let token = tokens[position].as_ref();
    let lower = token.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut f = Vec::with_capacity(20);
    f.push("bias".to_string());
    f.push(format!("w={lower}"));
    f.push(format!("shape={}", word_shape(token)));
    for n in 1..=3.min(chars.len()) {
        f.push(format!("pre{n}={}", chars[..n].iter().collect::<String>()));
        f.push(format!(
            "suf{n}={}",
            chars[chars.len() - n..].iter().collect::<String>()
        ));
    }
    if token.chars().any(|c| c.is_ascii_digit()) {
        f.push("has_digit".to_string());
    }
    if is_mutation_nomenclature(token) {
        f.push("mut_nomenclature".to_string());
    }
    let p = position as isize;
    for offset in [-2isize, -1, 1, 2] {
        f.push(format!("w[{offset:+}]={}", window_word(tokens, p + offset)));
    }
    f
}
