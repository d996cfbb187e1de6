//! Sentence encoder: word + relative-position embeddings followed by a
//! convolution with piecewise max-pooling over the three segments cut by the
//! two mentions, then `tanh`.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SentenceInstance;
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Matrix};

pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Convolution window `m` (odd).
    pub window: usize,
    /// Number of convolution filters; the sentence vector has 3× this size.
    pub filters: usize,
    pub word_dim: usize,
    pub pos_dim: usize,
    /// Relative offsets are clipped to `[-pos_clip, pos_clip]`.
    pub pos_clip: usize,
    pub max_len: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            window: 3,
            filters: 230,
            word_dim: 50,
            pos_dim: 5,
            pos_clip: 100,
            max_len: 120,
        }
    }
}

impl Hyperparams {
    pub fn input_dim(&self) -> usize {
        self.word_dim + 2 * self.pos_dim
    }

    pub fn sentence_dim(&self) -> usize {
        3 * self.filters
    }

    /// Rows in each position table: `2P + 1` offsets plus the PAD row.
    pub fn pos_rows(&self) -> usize {
        2 * self.pos_clip + 2
    }

    pub fn pos_pad_row(&self) -> usize {
        2 * self.pos_clip + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window must be odd, got {}", self.window)));
        }
        if self.filters == 0 || self.word_dim == 0 || self.pos_dim == 0 || self.max_len < 2 {
            return Err(Error::Config(format!("degenerate hyperparameters {self:?}")));
        }
        Ok(())
    }

    /// Row of the position table for token `i` relative to anchor `anchor`.
    pub fn position_row(&self, i: usize, anchor: usize) -> usize {
        let clip = self.pos_clip as i64;
        let offset = (i as i64 - anchor as i64).clamp(-clip, clip);
        (offset + clip) as usize
    }
}

/// Word vocabulary with PAD at 0 and UNK at 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordVocab {
    words: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl WordVocab {
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut vocab = Self {
            words: Vec::new(),
            lookup: HashMap::new(),
        };
        for w in [PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()].into_iter().chain(words) {
            if !vocab.lookup.contains_key(&w) {
                vocab.lookup.insert(w.clone(), vocab.words.len());
                vocab.words.push(w);
            }
        }
        vocab
    }

    /// Vocabulary of all tokens seen at least `min_count` times, in order of
    /// first appearance.
    pub fn from_sentences<'a, I>(sentences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a SentenceInstance>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order = Vec::new();
        for s in sentences {
            for t in &s.tokens {
                let c = counts.entry(t.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(t.as_str());
                }
                *c += 1;
            }
        }
        Self::from_words(
            order
                .into_iter()
                .filter(|w| counts[w] >= min_count)
                .map(str::to_owned),
        )
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.lookup.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Reads a text embedding file (`|V| k_w` header, then `word v1 … vk`).
/// PAD (zero) and UNK (uniform ±0.25) rows are prepended.
pub fn load_word_embeddings<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    word_dim: usize,
    rng: &mut R,
) -> Result<(WordVocab, Matrix)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(1, format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [count, dim] = dims[..] else {
        return Err(parse_err(1, format!("bad header {header:?}")));
    };
    if dim != word_dim {
        return Err(parse_err(1, format!("file has dimension {dim}, expected {word_dim}")));
    }
    let mut words = Vec::with_capacity(count);
    let mut data = vec![0.0; dim];
    data.extend((0..dim).map(|_| rng.gen_range(-0.25..0.25)));
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = parts.next().unwrap().to_owned();
        let before = data.len();
        for p in parts {
            data.push(p.parse().map_err(|_| parse_err(i + 2, format!("bad value {p:?}")))?);
        }
        if data.len() - before != dim {
            return Err(parse_err(i + 2, format!("expected {dim} values for {word:?}")));
        }
        words.push(word);
    }
    if words.len() != count {
        return Err(parse_err(1, format!("header says {count} words, found {}", words.len())));
    }
    let vocab = WordVocab::from_words(words);
    if vocab.len() != count + 2 {
        return Err(parse_err(1, "duplicate or reserved words in embedding file".into()));
    }
    let rows = vocab.len();
    Ok((vocab, Matrix::from_vec(rows, dim, data)))
}

/// A sentence mapped to table rows, ready for the encoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexedSentence {
    pub words: Vec<usize>,
    pub pos_head: Vec<usize>,
    pub pos_tail: Vec<usize>,
    /// Segment cuts: segment 1 is `[0, i1)`, segment 2 `[i1, i2)`, segment 3
    /// `[i2, n)`. `i1 ≤ i2` are the sorted exclusive ends of the mentions.
    pub i1: usize,
    pub i2: usize,
}

impl IndexedSentence {
    /// Position offsets are measured from the first token of each mention.
    /// Tokens equal to [`PAD_TOKEN`] get the PAD word and position rows.
    pub fn new(sentence: &SentenceInstance, vocab: &WordVocab, hp: &Hyperparams) -> Result<Self> {
        let n = sentence.tokens.len();
        if n > hp.max_len {
            return Err(Error::Dimension(format!(
                "sentence {:?} has {n} tokens, limit is {}",
                sentence.id, hp.max_len
            )));
        }
        for span in [&sentence.head, &sentence.tail] {
            if span.start >= span.end || span.end > n {
                return Err(Error::Dimension(format!(
                    "mention [{}, {}) outside sentence {:?} of {n} tokens",
                    span.start, span.end, sentence.id
                )));
            }
        }
        let words: Vec<usize> = sentence.tokens.iter().map(|t| vocab.id(t)).collect();
        let positions = |anchor: usize| -> Vec<usize> {
            words
                .iter()
                .enumerate()
                .map(|(i, &w)| if w == PAD_ID { hp.pos_pad_row() } else { hp.position_row(i, anchor) })
                .collect()
        };
        let (a, b) = (sentence.head.end, sentence.tail.end);
        Ok(Self {
            pos_head: positions(sentence.head.start),
            pos_tail: positions(sentence.tail.start),
            words,
            i1: a.min(b),
            i2: a.max(b),
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_pad(&self, i: usize) -> bool {
        self.words[i] == PAD_ID
    }
}

/// Word table and the two position tables.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTables {
    pub word: Matrix,
    pub pos_head: Matrix,
    pub pos_tail: Matrix,
}

impl EmbeddingTables {
    /// Random tables; PAD rows are zero.
    pub fn init<R: Rng + ?Sized>(hp: &Hyperparams, vocab_size: usize, rng: &mut R) -> Self {
        let mut word = Matrix::uniform(vocab_size, hp.word_dim, 0.25, rng);
        word.row_mut(PAD_ID).fill(0.0);
        Self::with_word_table(hp, word, rng)
    }

    /// Uses a given (e.g. pretrained) word table; position tables are random.
    pub fn with_word_table<R: Rng + ?Sized>(hp: &Hyperparams, word: Matrix, rng: &mut R) -> Self {
        let mut pos = || {
            let mut m = Matrix::uniform(hp.pos_rows(), hp.pos_dim, 0.05, rng);
            m.row_mut(hp.pos_pad_row()).fill(0.0);
            m
        };
        let pos_head = pos();
        let pos_tail = pos();
        Self { word, pos_head, pos_tail }
    }

    pub fn check(&self, hp: &Hyperparams) -> Result<()> {
        let ok = self.word.cols() == hp.word_dim
            && self.word.rows() >= 2
            && self.pos_head.shape() == (hp.pos_rows(), hp.pos_dim)
            && self.pos_tail.shape() == (hp.pos_rows(), hp.pos_dim);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("embedding tables do not match hyperparameters".into()))
        }
    }
}

/// Convolution kernel (`filters × window·input_dim`) and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub kernel: Matrix,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn init<R: Rng + ?Sized>(hp: &Hyperparams, rng: &mut R) -> Self {
        Self {
            kernel: Matrix::uniform(hp.filters, hp.window * hp.input_dim(), 0.05, rng),
            bias: (0..hp.filters).map(|_| rng.gen_range(-0.05..0.05)).collect(),
        }
    }

    pub fn window(&self, input_dim: usize) -> usize {
        self.kernel.cols() / input_dim
    }
}

/// Input vectors `x_i = [word; head position; tail position]`, one row per
/// token.
pub fn embed(sentence: &IndexedSentence, tables: &EmbeddingTables) -> Matrix {
    let (kw, kp) = (tables.word.cols(), tables.pos_head.cols());
    let ki = kw + 2 * kp;
    let mut out = Matrix::zeros(sentence.len(), ki);
    for i in 0..sentence.len() {
        let row = out.row_mut(i);
        row[..kw].copy_from_slice(tables.word.row(sentence.words[i]));
        row[kw..kw + kp].copy_from_slice(tables.pos_head.row(sentence.pos_head[i]));
        row[kw + kp..].copy_from_slice(tables.pos_tail.row(sentence.pos_tail[i]));
    }
    out
}

/// Convenience wrapper: index a sentence and embed it.
pub fn embed_tokens(
    sentence: &SentenceInstance,
    vocab: &WordVocab,
    tables: &EmbeddingTables,
    hp: &Hyperparams,
) -> Result<Matrix> {
    Ok(embed(&IndexedSentence::new(sentence, vocab, hp)?, tables))
}

/// Zero-padded input buffer: `(m−1)/2` zero rows on each side, so the window
/// of output `i` is the contiguous slice starting at row `i`.
fn pad_inputs(inputs: &Matrix, window: usize) -> Vec<f64> {
    let half = (window - 1) / 2;
    let ki = inputs.cols();
    let mut buf = vec![0.0; (inputs.rows() + 2 * half) * ki];
    buf[half * ki..(half + inputs.rows()) * ki].copy_from_slice(inputs.as_slice());
    buf
}

fn check_conv(inputs: &Matrix, conv: &ConvLayer) -> Result<usize> {
    let ki = inputs.cols();
    if ki == 0 || !conv.kernel.cols().is_multiple_of(ki) || conv.window(ki).is_multiple_of(2) {
        return Err(Error::Dimension(format!(
            "kernel width {} is not an odd multiple of input dim {ki}",
            conv.kernel.cols()
        )));
    }
    if conv.bias.len() != conv.kernel.rows() {
        return Err(Error::Dimension("conv bias length differs from filter count".into()));
    }
    if inputs.rows() == 0 {
        return Err(Error::Dimension("empty input sequence".into()));
    }
    Ok(conv.window(ki))
}

/// Hidden vectors `h_i` (one row per token, one column per filter).
pub fn convolve(inputs: &Matrix, conv: &ConvLayer) -> Result<Matrix> {
    let window = check_conv(inputs, conv)?;
    let padded = pad_inputs(inputs, window);
    Ok(convolve_padded(&padded, inputs.rows(), inputs.cols(), conv))
}

fn convolve_padded(padded: &[f64], n: usize, ki: usize, conv: &ConvLayer) -> Matrix {
    let width = conv.kernel.cols();
    let mut hidden = Matrix::zeros(n, conv.kernel.rows());
    for i in 0..n {
        let x = &padded[i * ki..i * ki + width];
        for (j, h) in hidden.row_mut(i).iter_mut().enumerate() {
            *h = conv.bias[j] + dot(conv.kernel.row(j), x);
        }
    }
    hidden
}

/// Per-segment, per-filter maxima. Masked positions are skipped; an empty
/// segment pools to 0 with no argmax. Ties go to the lowest index.
/// Output layout is `[segment 1 | segment 2 | segment 3]`, `filters` each.
pub fn piecewise_max_pool(
    hidden: &Matrix,
    i1: usize,
    i2: usize,
    mask: impl Fn(usize) -> bool,
) -> (Vec<f64>, Vec<Option<usize>>) {
    let (n, nf) = hidden.shape();
    let mut pooled = vec![0.0; 3 * nf];
    let mut argmax = vec![None; 3 * nf];
    let bounds = [(0, i1), (i1, i2), (i2, n)];
    for (seg, &(lo, hi)) in bounds.iter().enumerate() {
        for i in (lo..hi).filter(|&i| !mask(i)) {
            let row = hidden.row(i);
            for (j, &v) in row.iter().enumerate().take(nf) {
                let slot = seg * nf + j;
                if argmax[slot].is_none() || v > pooled[slot] {
                    pooled[slot] = v;
                    argmax[slot] = Some(i);
                }
            }
        }
    }
    (pooled, argmax)
}

/// Forward pass state kept for backpropagation.
#[derive(Clone, Debug)]
pub struct EncodedSentence {
    /// `tanh` of the pooled vector; length `3 × filters`.
    pub rep: Vec<f64>,
    argmax: Vec<Option<usize>>,
    padded: Vec<f64>,
}

/// PCNN over already-embedded inputs with segment cuts `i1 ≤ i2 ≤ n`.
pub fn pcnn_forward(inputs: &Matrix, conv: &ConvLayer, i1: usize, i2: usize) -> Result<Vec<f64>> {
    Ok(pcnn_forward_masked(inputs, conv, i1, i2, |_| false)?.rep)
}

fn pcnn_forward_masked(
    inputs: &Matrix,
    conv: &ConvLayer,
    i1: usize,
    i2: usize,
    mask: impl Fn(usize) -> bool,
) -> Result<EncodedSentence> {
    let window = check_conv(inputs, conv)?;
    if i1 > i2 || i2 > inputs.rows() {
        return Err(Error::Dimension(format!(
            "segment cuts ({i1}, {i2}) invalid for {} tokens",
            inputs.rows()
        )));
    }
    let padded = pad_inputs(inputs, window);
    let hidden = convolve_padded(&padded, inputs.rows(), inputs.cols(), conv);
    let (pooled, argmax) = piecewise_max_pool(&hidden, i1, i2, mask);
    Ok(EncodedSentence {
        rep: pooled.into_iter().map(f64::tanh).collect(),
        argmax,
        padded,
    })
}

/// Full encoder forward for an indexed sentence.
pub fn encode(sentence: &IndexedSentence, tables: &EmbeddingTables, conv: &ConvLayer) -> Result<EncodedSentence> {
    let inputs = embed(sentence, tables);
    pcnn_forward_masked(&inputs, conv, sentence.i1, sentence.i2, |i| sentence.is_pad(i))
}

/// Gradient accumulators for encoder parameters. Word rows are sparse.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGrads {
    pub word: BTreeMap<usize, Vec<f64>>,
    pub pos_head: Matrix,
    pub pos_tail: Matrix,
    pub kernel: Matrix,
    pub bias: Vec<f64>,
}

impl EncoderGrads {
    pub fn zeros(hp: &Hyperparams) -> Self {
        Self {
            word: BTreeMap::new(),
            pos_head: Matrix::zeros(hp.pos_rows(), hp.pos_dim),
            pos_tail: Matrix::zeros(hp.pos_rows(), hp.pos_dim),
            kernel: Matrix::zeros(hp.filters, hp.window * hp.input_dim()),
            bias: vec![0.0; hp.filters],
        }
    }

    pub fn add_assign(&mut self, other: &EncoderGrads) {
        for (&row, g) in &other.word {
            let dst = self.word.entry(row).or_insert_with(|| vec![0.0; g.len()]);
            axpy(1.0, g, dst);
        }
        axpy(1.0, other.pos_head.as_slice(), self.pos_head.as_mut_slice());
        axpy(1.0, other.pos_tail.as_slice(), self.pos_tail.as_mut_slice());
        axpy(1.0, other.kernel.as_slice(), self.kernel.as_mut_slice());
        axpy(1.0, &other.bias, &mut self.bias);
    }
}

/// Backpropagates `d_rep` (gradient w.r.t. the sentence vector) through
/// `tanh`, the pooling argmaxes, the convolution and the embedding lookups.
/// PAD rows never receive gradient.
pub fn encode_backward(
    sentence: &IndexedSentence,
    cache: &EncodedSentence,
    d_rep: &[f64],
    conv: &ConvLayer,
    hp: &Hyperparams,
    grads: &mut EncoderGrads,
) {
    let nf = conv.kernel.rows();
    let ki = hp.input_dim();
    let width = conv.kernel.cols();
    let n = sentence.len();
    // Gradient w.r.t. the padded input buffer.
    let mut d_padded = vec![0.0; cache.padded.len()];
    for (slot, arg) in cache.argmax.iter().enumerate() {
        let Some(i) = *arg else { continue };
        let r = cache.rep[slot];
        let g = d_rep[slot] * (1.0 - r * r);
        if g == 0.0 {
            continue;
        }
        let j = slot % nf;
        grads.bias[j] += g;
        axpy(g, &cache.padded[i * ki..i * ki + width], grads.kernel.row_mut(j));
        axpy(g, conv.kernel.row(j), &mut d_padded[i * ki..i * ki + width]);
    }
    let half = (width / ki - 1) / 2;
    let (kw, kp) = (hp.word_dim, hp.pos_dim);
    for t in 0..n {
        if sentence.is_pad(t) {
            continue;
        }
        let dx = &d_padded[(t + half) * ki..(t + half + 1) * ki];
        let w = grads.word.entry(sentence.words[t]).or_insert_with(|| vec![0.0; kw]);
        axpy(1.0, &dx[..kw], w);
        axpy(1.0, &dx[kw..kw + kp], grads.pos_head.row_mut(sentence.pos_head[t]));
        axpy(1.0, &dx[kw + kp..], grads.pos_tail.row_mut(sentence.pos_tail[t]));
    }
}
