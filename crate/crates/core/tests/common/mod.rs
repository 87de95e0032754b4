#![allow(dead_code)]

pub mod beam;

use std::sync::Arc;

use ncmt_core::corpus::SentencePair;
use ncmt_core::scorers::{RowCondition, TableScorer, Vocabulary, BOS, EOS};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EN: [&str; 12] = [
    "the", "house", "is", "big", "we", "walk", "to", "school", "every", "morning", "water", "light",
];
pub const HE: [&str; 12] = [
    "הבית", "גדול", "אנחנו", "הולכים", "לבית", "ספר", "כל", "בוקר", "מים", "אור", "יום", "לילה",
];

fn words(rng: &mut ChaCha8Rng, pool: &[&str], n: usize) -> Vec<String> {
    (0..n).map(|_| pool.choose(rng).unwrap().to_string()).collect()
}

/// A clean en/he pair with, at random, one or more injected defects.
pub fn synthetic_pair(rng: &mut ChaCha8Rng, id: usize) -> SentencePair {
    let n = rng.random_range(3..9);
    let mut src = words(rng, &EN, n);
    let m = rng.random_range(n.saturating_sub(2).max(1)..n + 2);
    let mut tgt = words(rng, &HE, m);
    match rng.random_range(0..12) {
        0 => src.extend(words(rng, &EN, 30)),
        1 => src.push("x".repeat(rng.random_range(35..50))),
        2 => {
            src.push(rng.random_range(1..100).to_string());
            tgt.push(rng.random_range(1..100).to_string());
        }
        3 => tgt.extend(["привет", "мир", "друг"].iter().map(|s| s.to_string())),
        4 => {
            src.insert(1, "Moshe".into());
            src.insert(2, "Cohen".into());
        }
        5 => tgt.truncate(1),
        6 => {
            src = vec!["y".repeat(rng.random_range(10..16))];
        }
        7 => tgt.extend(words(rng, &HE, 20)),
        8 => {
            let num = format!("{},{:03}", rng.random_range(1..10), rng.random_range(0..1000));
            tgt.push(num.replace(',', ""));
            src.push(num);
        }
        9 => tgt = vec![String::new()],
        _ => {}
    }
    SentencePair::new(id, src.join(" "), tgt.join(" "))
}

pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<SentencePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| synthetic_pair(&mut rng, i)).collect()
}

pub fn toy_vocab(n: usize) -> Arc<Vocabulary> {
    let names = ["a", "b", "c", "d"];
    Arc::new(Vocabulary::new(names[..n].iter().copied()).unwrap())
}

fn random_row(rng: &mut ChaCha8Rng, vocab: &Vocabulary) -> Vec<(String, f64)> {
    let weights: Vec<f64> = (0..vocab.len()).map(|_| rng.random_range(0.05..1.0)).collect();
    let keep: Vec<(String, f64)> = vocab
        .tokens()
        .iter()
        .zip(&weights)
        .filter(|(t, _)| t.as_str() != BOS)
        .map(|(t, w)| (t.clone(), *w))
        .collect();
    let total: f64 = keep.iter().map(|(_, w)| w).sum();
    keep.into_iter().map(|(t, w)| (t, w / total)).collect()
}

/// Random table with rows for every context suffix of length 1 and 2 plus a
/// default row. Every token but `<s>` has positive probability everywhere.
pub fn random_table(rng: &mut ChaCha8Rng, vocab: &Arc<Vocabulary>, condition: RowCondition) -> TableScorer {
    let mut b = TableScorer::builder(vocab.clone()).default_row(&random_row(rng, vocab));
    let ctx_tokens: Vec<String> = vocab.tokens().iter().filter(|t| t.as_str() != EOS).cloned().collect();
    for first in &ctx_tokens {
        b = b.row(condition.clone(), std::slice::from_ref(first), &random_row(rng, vocab));
        for second in ctx_tokens.iter().filter(|t| t.as_str() != BOS) {
            b = b.row(condition.clone(), &[first.clone(), second.clone()], &random_row(rng, vocab));
        }
    }
    b.build().unwrap()
}

/// Random table whose rows depend on the condition: one block of rows for
/// every condition of up to `max_cond` tokens, plus a default row.
pub fn random_conditional_table(rng: &mut ChaCha8Rng, vocab: &Arc<Vocabulary>, max_cond: usize) -> TableScorer {
    let plain: Vec<String> = vocab
        .tokens()
        .iter()
        .filter(|t| t.as_str() != BOS && t.as_str() != EOS)
        .cloned()
        .collect();
    let mut conditions: Vec<Vec<String>> = vec![Vec::new()];
    let mut frontier = conditions.clone();
    for _ in 0..max_cond {
        frontier = frontier
            .iter()
            .flat_map(|c| plain.iter().map(move |t| [c.clone(), vec![t.clone()]].concat()))
            .collect();
        conditions.extend(frontier.iter().cloned());
    }
    let mut b = TableScorer::builder(vocab.clone()).default_row(&random_row(rng, vocab));
    let ctx_tokens: Vec<String> = vocab.tokens().iter().filter(|t| t.as_str() != EOS).cloned().collect();
    for cond in conditions {
        for first in &ctx_tokens {
            let c = RowCondition::Exact(cond.clone());
            b = b.row(c, std::slice::from_ref(first), &random_row(rng, vocab));
        }
    }
    b.build().unwrap()
}
