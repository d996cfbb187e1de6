use rand::Rng;

use crate::aggregation::{GateParams, RelationMatrix};
use crate::encoder::{ConvLayer, EmbeddingTables, EncoderGrads, Hyperparams};
use crate::error::{Error, Result};
use crate::tensor::{axpy, Matrix};

/// Every learnable tensor of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub hp: Hyperparams,
    pub embeddings: EmbeddingTables,
    pub conv: ConvLayer,
    pub relations: RelationMatrix,
    pub gate: GateParams,
}

pub const TENSOR_NAMES: [&str; 9] = [
    "word_embeddings",
    "pos_head",
    "pos_tail",
    "conv_kernel",
    "conv_bias",
    "relation_weights",
    "relation_bias",
    "gate_weights",
    "gate_bias",
];

impl ModelParams {
    /// Word table uniform(±0.25); all other tensors uniform(±0.05).
    pub fn init<R: Rng + ?Sized>(hp: Hyperparams, vocab_size: usize, n_relations: usize, rng: &mut R) -> Result<Self> {
        hp.validate()?;
        let embeddings = EmbeddingTables::init(&hp, vocab_size, rng);
        Ok(Self::assemble(hp, embeddings, n_relations, rng))
    }

    /// Starts from a given word table (e.g. loaded from an embedding file).
    pub fn with_word_table<R: Rng + ?Sized>(hp: Hyperparams, word: Matrix, n_relations: usize, rng: &mut R) -> Result<Self> {
        hp.validate()?;
        if word.cols() != hp.word_dim {
            return Err(Error::Dimension(format!(
                "word table has dimension {}, expected {}",
                word.cols(),
                hp.word_dim
            )));
        }
        let embeddings = EmbeddingTables::with_word_table(&hp, word, rng);
        Ok(Self::assemble(hp, embeddings, n_relations, rng))
    }

    fn assemble<R: Rng + ?Sized>(hp: Hyperparams, embeddings: EmbeddingTables, n_relations: usize, rng: &mut R) -> Self {
        let conv = ConvLayer::init(&hp, rng);
        let relations = RelationMatrix::init(n_relations, hp.sentence_dim(), rng);
        let gate = GateParams::init(hp.sentence_dim(), rng);
        Self {
            hp,
            embeddings,
            conv,
            relations,
            gate,
        }
    }

    /// Fresh gate parameters, used when fine-tuning starts.
    pub fn reset_gate<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.gate = GateParams::init(self.hp.sentence_dim(), rng);
    }

    pub fn n_relations(&self) -> usize {
        self.relations.n_relations()
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.word.rows()
    }

    /// Named tensors with their shapes, in checkpoint order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let m = |x: &Matrix| vec![x.rows(), x.cols()];
        vec![
            (TENSOR_NAMES[0], m(&self.embeddings.word), self.embeddings.word.as_slice()),
            (TENSOR_NAMES[1], m(&self.embeddings.pos_head), self.embeddings.pos_head.as_slice()),
            (TENSOR_NAMES[2], m(&self.embeddings.pos_tail), self.embeddings.pos_tail.as_slice()),
            (TENSOR_NAMES[3], m(&self.conv.kernel), self.conv.kernel.as_slice()),
            (TENSOR_NAMES[4], vec![self.conv.bias.len()], &self.conv.bias),
            (TENSOR_NAMES[5], m(&self.relations.weights), self.relations.weights.as_slice()),
            (TENSOR_NAMES[6], vec![self.relations.bias.len()], &self.relations.bias),
            (TENSOR_NAMES[7], vec![self.gate.weights.len()], &self.gate.weights),
            (TENSOR_NAMES[8], vec![], std::slice::from_ref(&self.gate.bias)),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            (TENSOR_NAMES[0], self.embeddings.word.as_mut_slice()),
            (TENSOR_NAMES[1], self.embeddings.pos_head.as_mut_slice()),
            (TENSOR_NAMES[2], self.embeddings.pos_tail.as_mut_slice()),
            (TENSOR_NAMES[3], self.conv.kernel.as_mut_slice()),
            (TENSOR_NAMES[4], &mut self.conv.bias),
            (TENSOR_NAMES[5], self.relations.weights.as_mut_slice()),
            (TENSOR_NAMES[6], &mut self.relations.bias),
            (TENSOR_NAMES[7], &mut self.gate.weights),
            (TENSOR_NAMES[8], std::slice::from_mut(&mut self.gate.bias)),
        ]
    }

    pub fn check(&self) -> Result<()> {
        let hp = &self.hp;
        hp.validate()?;
        self.embeddings.check(hp)?;
        let d = hp.sentence_dim();
        let ok = self.conv.kernel.shape() == (hp.filters, hp.window * hp.input_dim())
            && self.conv.bias.len() == hp.filters
            && self.relations.weights.cols() == d
            && self.relations.bias.len() == self.relations.weights.rows()
            && self.gate.weights.len() == 3 * d;
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("parameter shapes do not match hyperparameters".into()))
        }
    }

    /// `θ ← θ − lr · g`, skipping frozen groups.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64, freeze: Freeze) {
        if !freeze.encoder {
            if !freeze.words {
                for (&row, g) in &grads.encoder.word {
                    axpy(-lr, g, self.embeddings.word.row_mut(row));
                }
            }
            let e = &grads.encoder;
            axpy(-lr, e.pos_head.as_slice(), self.embeddings.pos_head.as_mut_slice());
            axpy(-lr, e.pos_tail.as_slice(), self.embeddings.pos_tail.as_mut_slice());
            axpy(-lr, e.kernel.as_slice(), self.conv.kernel.as_mut_slice());
            axpy(-lr, &e.bias, &mut self.conv.bias);
        }
        axpy(-lr, grads.relation_weights.as_slice(), self.relations.weights.as_mut_slice());
        axpy(-lr, &grads.relation_bias, &mut self.relations.bias);
        axpy(-lr, &grads.gate_weights, &mut self.gate.weights);
        self.gate.bias -= lr * grads.gate_bias;
    }
}

/// Parameter groups held fixed during an update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Freeze {
    pub words: bool,
    pub encoder: bool,
}

/// Gradient of the loss with respect to every tensor in [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: EncoderGrads,
    pub relation_weights: Matrix,
    pub relation_bias: Vec<f64>,
    pub gate_weights: Vec<f64>,
    pub gate_bias: f64,
}

impl Gradients {
    pub fn zeros(params: &ModelParams) -> Self {
        let hp = &params.hp;
        Self {
            encoder: EncoderGrads::zeros(hp),
            relation_weights: Matrix::zeros(params.n_relations(), hp.sentence_dim()),
            relation_bias: vec![0.0; params.n_relations()],
            gate_weights: vec![0.0; 3 * hp.sentence_dim()],
            gate_bias: 0.0,
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.encoder.add_assign(&other.encoder);
        axpy(1.0, other.relation_weights.as_slice(), self.relation_weights.as_mut_slice());
        axpy(1.0, &other.relation_bias, &mut self.relation_bias);
        axpy(1.0, &other.gate_weights, &mut self.gate_weights);
        self.gate_bias += other.gate_bias;
    }

    /// Dense copies laid out like [`ModelParams::tensors`].
    pub fn dense(&self, params: &ModelParams) -> Vec<(&'static str, Vec<f64>)> {
        let mut word = vec![0.0; params.embeddings.word.as_slice().len()];
        let kw = params.hp.word_dim;
        for (&row, g) in &self.encoder.word {
            word[row * kw..(row + 1) * kw].copy_from_slice(g);
        }
        vec![
            (TENSOR_NAMES[0], word),
            (TENSOR_NAMES[1], self.encoder.pos_head.as_slice().to_vec()),
            (TENSOR_NAMES[2], self.encoder.pos_tail.as_slice().to_vec()),
            (TENSOR_NAMES[3], self.encoder.kernel.as_slice().to_vec()),
            (TENSOR_NAMES[4], self.encoder.bias.clone()),
            (TENSOR_NAMES[5], self.relation_weights.as_slice().to_vec()),
            (TENSOR_NAMES[6], self.relation_bias.clone()),
            (TENSOR_NAMES[7], self.gate_weights.clone()),
            (TENSOR_NAMES[8], vec![self.gate_bias]),
        ]
    }

    pub fn max_abs(&self, params: &ModelParams) -> f64 {
        self.dense(params)
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}
