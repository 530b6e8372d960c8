use std::collections::HashMap;
use std::fmt;

use super::{check_symbol, Model, ModelContext, ModelOutput, Mode};
use crate::codec::{quantize_sparse, QuantizedPmf};
use crate::error::{Error, Result};

/// Largest context order for counting models.
pub const MAX_ORDER: usize = 3;

/// Additive smoothing constant `delta = num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Smoothing {
    num: u32,
    den: u32,
}

impl Smoothing {
    pub const LAPLACE: Smoothing = Smoothing { num: 1, den: 1 };
    pub const KT: Smoothing = Smoothing { num: 1, den: 2 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidConfig(format!("smoothing {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(Smoothing {
            num: num / g,
            den: den / g,
        })
    }

    /// Accepts any positive delta that is a multiple of 1/1024.
    pub fn from_f64(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0 && delta <= 1e6) {
            return Err(Error::InvalidConfig(format!("smoothing {delta} must be positive")));
        }
        let mut den = 1u32;
        while den <= 1024 {
            let scaled = delta * f64::from(den);
            if scaled.fract() == 0.0 {
                return Smoothing::new(scaled as u32, den);
            }
            den *= 2;
        }
        Err(Error::InvalidConfig(format!(
            "smoothing {delta} is not a multiple of 1/1024"
        )))
    }

    pub fn value(&self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    pub fn num(&self) -> u32 {
        self.num
    }

    pub fn den(&self) -> u32 {
        self.den
    }

    pub(crate) fn weight(&self, count: u32) -> u64 {
        u64::from(count) * u64::from(self.den) + u64::from(self.num)
    }

    pub(crate) fn total_weight(&self, total: u32, alphabet: usize) -> u64 {
        u64::from(total) * u64::from(self.den) + alphabet as u64 * u64::from(self.num)
    }
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.num, self.den) {
            (1, 1) => f.write_str("laplace"),
            (1, 2) => f.write_str("kt"),
            (n, d) => write!(f, "d{n}/{d}"),
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Smoothing::LAPLACE),
            "kt" => Ok(Smoothing::KT),
            _ => {
                let body = s.strip_prefix('d').unwrap_or(s);
                if let Some((n, d)) = body.split_once('/') {
                    let parse = |v: &str| {
                        v.parse::<u32>()
                            .map_err(|_| Error::InvalidConfig(format!("bad smoothing `{s}`")))
                    };
                    Smoothing::new(parse(n)?, parse(d)?)
                } else {
                    let v: f64 = body
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad smoothing `{s}`")))?;
                    Smoothing::from_f64(v)
                }
            }
        }
    }
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Occurrence counts of next symbols after one context.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub(crate) struct Counts {
    /// Sorted by symbol.
    pub(crate) entries: Vec<(u32, u32)>,
    pub(crate) total: u32,
}

impl Counts {
    pub(crate) fn add(&mut self, symbol: u32) {
        match self.entries.binary_search_by_key(&symbol, |e| e.0) {
            Ok(i) => self.entries[i].1 += 1,
            Err(i) => self.entries.insert(i, (symbol, 1)),
        }
        self.total += 1;
    }

    pub(crate) fn count(&self, symbol: u32) -> u32 {
        self.entries
            .binary_search_by_key(&symbol, |e| e.0)
            .map_or(0, |i| self.entries[i].1)
    }

    pub(crate) fn log2_prob(&self, symbol: u32, smoothing: Smoothing, alphabet: usize) -> f64 {
        let w = smoothing.weight(self.count(symbol)) as f64;
        let total = smoothing.total_weight(self.total, alphabet) as f64;
        (w / total).log2()
    }

    pub(crate) fn log2_probs(&self, smoothing: Smoothing, alphabet: usize) -> Vec<f64> {
        let total = smoothing.total_weight(self.total, alphabet) as f64;
        let base = (smoothing.weight(0) as f64 / total).log2();
        let mut out = vec![base; alphabet];
        for &(s, c) in &self.entries {
            out[s as usize] = (smoothing.weight(c) as f64 / total).log2();
        }
        out
    }

    pub(crate) fn quantize(
        &self,
        smoothing: Smoothing,
        alphabet: usize,
        precision: u32,
    ) -> Result<QuantizedPmf> {
        let seen: Vec<(u32, u64)> = self
            .entries
            .iter()
            .map(|&(s, c)| (s, smoothing.weight(c)))
            .collect();
        quantize_sparse(alphabet, &seen, smoothing.weight(0), precision)
    }
}

pub(crate) fn check_context_alphabet(alphabet: usize, order: usize) -> Result<()> {
    if order > MAX_ORDER {
        return Err(Error::InvalidConfig(format!(
            "context order {order} exceeds {MAX_ORDER}"
        )));
    }
    if alphabet < 2 {
        return Err(Error::InvalidConfig("alphabet needs at least 2 symbols".into()));
    }
    if order > 0 && alphabet > 1 << 16 {
        return Err(Error::InvalidConfig(
            "context models over more than 65536 symbols support order 0 only".into(),
        ));
    }
    Ok(())
}

/// Packs up to three 16-bit symbols plus the context length into one key.
pub(crate) fn context_key(context: &[u32]) -> u64 {
    debug_assert!(context.len() <= MAX_ORDER);
    let mut key = (context.len() as u64) << 48;
    for (i, &s) in context.iter().enumerate() {
        key |= u64::from(s & 0xffff) << (16 * i);
    }
    key
}

/// Order-k adaptive counting model with additive smoothing:
/// `P(s | ctx) = (count(ctx, s) + delta) / (count(ctx) + V * delta)`.
///
/// Counts start empty at each chunk. Early positions with fewer than `k`
/// predecessors use the shorter prefix as their context.
#[derive(Debug, Clone)]
pub struct AdaptiveModel {
    alphabet: usize,
    order: usize,
    smoothing: Smoothing,
    contexts: HashMap<u64, Counts>,
    synced: usize,
    last: Option<u32>,
}

impl AdaptiveModel {
    pub fn new(alphabet: usize, order: usize, smoothing: Smoothing) -> Result<Self> {
        check_context_alphabet(alphabet, order)?;
        Ok(AdaptiveModel {
            alphabet,
            order,
            smoothing,
            contexts: HashMap::new(),
            synced: 0,
            last: None,
        })
    }

    pub fn laplace(alphabet: usize, order: usize) -> Result<Self> {
        Self::new(alphabet, order, Smoothing::LAPLACE)
    }

    pub fn kt(alphabet: usize, order: usize) -> Result<Self> {
        Self::new(alphabet, order, Smoothing::KT)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    fn reset(&mut self) {
        self.contexts.clear();
        self.synced = 0;
        self.last = None;
    }

    fn context_of<'h>(&self, history: &'h [u32], pos: usize) -> &'h [u32] {
        &history[pos.saturating_sub(self.order)..pos]
    }

    /// Brings the counts up to date with `history`, rebuilding if the
    /// history is not an extension of what was already counted.
    fn sync(&mut self, history: &[u32]) -> Result<()> {
        let consistent = history.len() >= self.synced
            && (self.synced == 0 || Some(history[self.synced - 1]) == self.last);
        if !consistent {
            self.reset();
        }
        for pos in self.synced..history.len() {
            let s = history[pos];
            if s as usize >= self.alphabet {
                return Err(Error::InvalidPmf(format!(
                    "symbol {s} outside alphabet of {}",
                    self.alphabet
                )));
            }
            let key = context_key(self.context_of(history, pos));
            self.contexts.entry(key).or_default().add(s);
        }
        self.synced = history.len();
        self.last = history.last().copied();
        Ok(())
    }

    fn counts_for(&self, history: &[u32]) -> Option<&Counts> {
        let key = context_key(self.context_of(history, history.len()));
        self.contexts.get(&key)
    }
}

static EMPTY: Counts = Counts {
    entries: Vec::new(),
    total: 0,
};

impl Model for AdaptiveModel {
    fn id(&self) -> String {
        let mut id = format!("adaptive:o{}:{}", self.order, self.smoothing);
        if self.alphabet != 256 {
            id.push_str(&format!(":a{}", self.alphabet));
        }
        id
    }

    fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    fn begin_chunk(&mut self, _known: Option<&[u32]>) -> Result<()> {
        self.reset();
        Ok(())
    }

    fn next_distribution(&mut self, ctx: &ModelContext<'_>, mode: Mode) -> Result<ModelOutput> {
        check_symbol(self.alphabet, ctx)?;
        self.sync(ctx.symbols_so_far)?;
        let counts = self.counts_for(ctx.symbols_so_far).unwrap_or(&EMPTY);
        match mode {
            Mode::Metrics => match ctx.target {
                Some(t) => Ok(ModelOutput {
                    log2_probs: None,
                    quantized: None,
                    log2_prob_of_next: Some(counts.log2_prob(t, self.smoothing, self.alphabet)),
                }),
                None => Ok(ModelOutput::from_log2_probs(
                    counts.log2_probs(self.smoothing, self.alphabet),
                    None,
                )),
            },
            Mode::Codec { precision } => Ok(ModelOutput::from_quantized(
                counts.quantize(self.smoothing, self.alphabet, precision)?,
                ctx.target,
            )),
        }
    }
}
