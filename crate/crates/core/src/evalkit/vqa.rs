//! VQA answer normalization and consensus accuracy.
//!
//! Normalization rules, applied in order:
//!
//! | step | rule |
//! |------|------|
//! | 1 | lowercase |
//! | 2 | `.` between two digits is kept (`1.5`) |
//! | 3 | `,` between two digits is deleted (`1,000` -> `1000`) |
//! | 4 | apostrophes are deleted (`don't` -> `dont`) |
//! | 5 | any other punctuation becomes a space |
//! | 6 | number words `zero`..`ten` become digits |
//! | 7 | articles `a`, `an`, `the` are dropped |
//! | 8 | whitespace is collapsed to single spaces and trimmed |

use super::EvalError;

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];
const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub fn normalize_vqa_answer(text: &str) -> String {
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let digit_at = |i: Option<usize>| i.and_then(|i| lower.get(i)).is_some_and(|c| c.is_ascii_digit());
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in lower.iter().enumerate() {
        if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.push(c);
            continue;
        }
        let between_digits = digit_at(i.checked_sub(1)) && digit_at(Some(i + 1));
        match c {
            '.' if between_digits => cleaned.push('.'),
            ',' if between_digits => {}
            '\'' | '\u{2019}' => {}
            _ => cleaned.push(' '),
        }
    }
    let words: Vec<&str> = cleaned
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .map(|w| match NUMBER_WORDS.iter().position(|n| *n == w) {
            Some(d) => DIGITS[d],
            None => w,
        })
        .collect();
    words.join(" ")
}

const DIGITS: [&str; 11] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10"];

/// `min(matches / 3, 1)` against exactly ten annotator answers.
pub fn vqa_accuracy(pred: &str, answers_10: &[String]) -> Result<f64, EvalError> {
    if answers_10.len() != 10 {
        return Err(EvalError::WrongAnnotatorCount(answers_10.len()));
    }
    let p = normalize_vqa_answer(pred);
    let matches = answers_10.iter().filter(|a| normalize_vqa_answer(a) == p).count();
    Ok((matches as f64 / 3.0).min(1.0))
}
