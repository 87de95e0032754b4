//! Straightforward reference decoder used to check the library's beam
//! search, written against the scorer interface only.

use std::cmp::Ordering;

use ncmt_core::scorers::{SequenceScorer, TokenId};

#[derive(Debug, Clone, PartialEq)]
pub struct Hyp {
    pub tokens: Vec<TokenId>,
    pub direct: f64,
    pub eos: bool,
    pub finished: bool,
    pub score: f64,
}

pub struct Setup<'a> {
    pub direct: &'a dyn SequenceScorer,
    /// Channel model and language model; `None` ranks by direct score only.
    pub rerank: Option<(&'a dyn SequenceScorer, &'a dyn SequenceScorer)>,
    pub source: &'a [TokenId],
    pub beam: usize,
    pub k2: usize,
    pub length_penalty: f64,
    pub delta_ch: f64,
    pub delta_lm: f64,
    pub max_len: usize,
}

fn chain(scorer: &dyn SequenceScorer, seq: &[TokenId], cond: Option<&[TokenId]>, eos: bool) -> f64 {
    let v = scorer.vocab();
    let mut ctx = vec![v.bos()];
    let mut total = 0.0;
    let mut targets = seq.to_vec();
    if eos {
        targets.push(v.eos());
    }
    for t in targets {
        let d = scorer.next_distribution(&ctx, cond).unwrap();
        total += d[t.0 as usize];
        ctx.push(t);
    }
    total
}

impl Setup<'_> {
    pub fn score(&self, h: &Hyp) -> f64 {
        let t = (h.tokens.len().max(1) as f64).powf(self.length_penalty);
        match self.rerank {
            None => h.direct / t,
            Some((ch, lm)) => {
                let s = self.source.len().max(1) as f64;
                let c = chain(ch, self.source, Some(&h.tokens), true);
                let l = chain(lm, &h.tokens, None, h.eos);
                h.direct / t + (self.delta_ch * c + self.delta_lm * l) / s
            }
        }
    }

    fn order(a: &Hyp, b: &Hyp) -> Ordering {
        b.score
            .total_cmp(&a.score)
            .then(b.direct.total_cmp(&a.direct))
            .then_with(|| a.tokens.cmp(&b.tokens))
            .then(b.eos.cmp(&a.eos))
    }

    fn children(&self, h: &Hyp, limit: usize) -> Vec<Hyp> {
        let v = self.direct.vocab();
        let mut ctx = vec![v.bos()];
        ctx.extend(&h.tokens);
        let d = self.direct.next_distribution(&ctx, Some(self.source)).unwrap();
        let mut opts: Vec<(usize, f64)> = d
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, lp)| i != v.bos().0 as usize && lp.exp() > 0.0)
            .collect();
        opts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        opts.truncate(limit);
        opts.into_iter()
            .map(|(i, lp)| {
                let mut c = Hyp {
                    tokens: h.tokens.clone(),
                    direct: h.direct + lp,
                    eos: false,
                    finished: false,
                    score: 0.0,
                };
                if i == v.eos().0 as usize {
                    c.eos = true;
                    c.finished = true;
                } else {
                    c.tokens.push(TokenId(i as u32));
                    c.finished = c.tokens.len() >= self.max_len;
                }
                c.score = self.score(&c);
                c
            })
            .collect()
    }

    pub fn beam_search(&self) -> Vec<Hyp> {
        let root = Hyp {
            tokens: vec![],
            direct: 0.0,
            eos: false,
            finished: false,
            score: 0.0,
        };
        let mut beam = vec![root];
        while beam.iter().any(|h| !h.finished) {
            let mut pool: Vec<Hyp> = beam.iter().filter(|h| h.finished).cloned().collect();
            for h in beam.iter().filter(|h| !h.finished) {
                pool.extend(self.children(h, self.k2));
            }
            pool.sort_by(Self::order);
            pool.truncate(self.beam);
            beam = pool;
        }
        beam
    }

    /// Every complete hypothesis, best first.
    pub fn enumerate(&self) -> Vec<Hyp> {
        let root = Hyp {
            tokens: vec![],
            direct: 0.0,
            eos: false,
            finished: false,
            score: 0.0,
        };
        let mut open = vec![root];
        let mut done = Vec::new();
        while let Some(h) = open.pop() {
            for c in self.children(&h, usize::MAX) {
                if c.finished {
                    done.push(c);
                } else {
                    open.push(c);
                }
            }
        }
        done.sort_by(Self::order);
        done
    }
}
