use crate::error::{Error, Result};

const ONSET_DIGRAPHS: [&str; 5] = ["ch", "sh", "th", "ph", "wh"];

fn is_plain_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Lowercases and validates one word: letters, with apostrophes allowed
/// only between letters.
pub fn normalize_word(word: &str) -> Result<String> {
    let w: String = word.trim().to_lowercase();
    let trimmed = w.trim_matches('\'');
    if trimmed.is_empty() {
        return Err(Error::Tokenize(format!("empty word {word:?}")));
    }
    if let Some(bad) = trimmed.chars().find(|c| !(c.is_alphabetic() || *c == '\'')) {
        return Err(Error::Tokenize(format!("non-alphabetic character {bad:?} in {word:?}")));
    }
    Ok(trimmed.to_string())
}

/// Splits a word into syllables with a small deterministic rule set:
///
/// * nuclei are maximal runs of vowels (`y` counts unless word-initial or
///   followed by a vowel);
/// * a final lone `e` is silent and folds into the previous syllable, except
///   after consonant + `l` (`lit-tle`);
/// * between nuclei, one consonant joins the following syllable, a longer
///   cluster gives up only its last consonant (or a `th`-style digraph).
///
/// The concatenation of the result always equals the normalized word.
pub fn syllabify(word: &str) -> Result<Vec<String>> {
    let w = normalize_word(word)?;
    let chars: Vec<char> = w.chars().collect();
    let n = chars.len();

    let vowel: Vec<bool> = (0..n)
        .map(|i| {
            let c = chars[i];
            if c == 'y' {
                i > 0 && !chars.get(i + 1).copied().is_some_and(is_plain_vowel)
            } else {
                is_plain_vowel(c)
            }
        })
        .collect();

    // nuclei as [start, end)
    let mut nuclei: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if vowel[i] {
            let s = i;
            while i < n && vowel[i] {
                i += 1;
            }
            nuclei.push((s, i));
        } else {
            i += 1;
        }
    }

    let mut consonant_le = false;
    if nuclei.len() > 1 {
        let &(s, e) = nuclei.last().unwrap();
        if e == n && s == n - 1 && chars[s] == 'e' {
            let prev = &nuclei[nuclei.len() - 2];
            // consonant + l + e, with at least one consonant before the l
            if n >= 3 && chars[n - 2] == 'l' && n - 2 > prev.1 && !vowel[n - 3] {
                consonant_le = true;
            } else {
                nuclei.pop();
            }
        }
    }

    if nuclei.len() <= 1 {
        return Ok(vec![w]);
    }

    let mut cuts = Vec::with_capacity(nuclei.len() - 1);
    for k in 0..nuclei.len() - 1 {
        let (cs, ce) = (nuclei[k].1, nuclei[k + 1].0);
        let cluster: String = chars[cs..ce].iter().collect();
        let last = k + 2 == nuclei.len();
        let onset = if cluster.is_empty() {
            0
        } else if last && consonant_le {
            // "-kle", "-tle": consonant joins the l
            cluster.chars().count().min(2)
        } else if cluster.chars().count() >= 2 && ONSET_DIGRAPHS.iter().any(|d| cluster.ends_with(d)) {
            2
        } else {
            1
        };
        cuts.push(ce - onset);
    }

    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        out.push(chars[start..c].iter().collect());
        start = c;
    }
    out.push(chars[start..].iter().collect());
    Ok(out)
}
