//! Rule-based word tokenizer used by the ratio filters and the metrics.
//!
//! Splits on Unicode whitespace, isolates every punctuation or symbol
//! character (general categories `P*` and `S*`) as its own token, and splits
//! digit runs from letters. A `.` or `,` between two digits stays inside the
//! number, so `3.5km` becomes `["3.5", "km"]`. Combining marks attach to the
//! token they follow.

use unicode_general_category::{get_general_category, GeneralCategory as Gc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Word,
    Digit,
    Punct,
    Mark,
}

fn classify(c: char) -> Class {
    match get_general_category(c) {
        Gc::DecimalNumber => Class::Digit,
        Gc::NonspacingMark | Gc::SpacingMark | Gc::EnclosingMark => Class::Mark,
        Gc::ConnectorPunctuation
        | Gc::DashPunctuation
        | Gc::OpenPunctuation
        | Gc::ClosePunctuation
        | Gc::InitialPunctuation
        | Gc::FinalPunctuation
        | Gc::OtherPunctuation
        | Gc::MathSymbol
        | Gc::CurrencySymbol
        | Gc::ModifierSymbol
        | Gc::OtherSymbol => Class::Punct,
        _ => Class::Word,
    }
}

fn is_decimal_separator(c: char) -> bool {
    c == '.' || c == ','
}

/// Tokenizes one sentence. Tokens borrow from `text`.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        tokenize_chunk(chunk, &mut tokens);
    }
    tokens
}

/// Number of tokens, without materializing them.
pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

fn tokenize_chunk<'a>(chunk: &'a str, out: &mut Vec<&'a str>) {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut start = 0usize;
    let mut current: Option<Class> = None;

    for (i, &(offset, c)) in chars.iter().enumerate() {
        let mut class = classify(c);
        if class == Class::Mark {
            if current.is_some() {
                continue;
            }
            class = Class::Word;
        }
        if current == Some(Class::Digit) && is_decimal_separator(c) {
            let prev_digit = i > 0 && classify(chars[i - 1].1) == Class::Digit;
            let next_digit = chars.get(i + 1).is_some_and(|&(_, n)| classify(n) == Class::Digit);
            if prev_digit && next_digit {
                continue;
            }
        }
        let continues = matches!(
            (current, class),
            (Some(Class::Word), Class::Word) | (Some(Class::Digit), Class::Digit)
        );
        if !continues {
            if current.is_some() {
                out.push(&chunk[start..offset]);
            }
            start = offset;
            current = Some(class);
        }
    }
    if current.is_some() {
        out.push(&chunk[start..]);
    }
}

/// Number of Unicode scalar values.
pub fn char_count(text: &str) -> usize {
    text.chars().count()
}
