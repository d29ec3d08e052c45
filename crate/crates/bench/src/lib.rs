//! Shared fixtures for the criterion benchmarks: a grammar corpus, a
//! briefly trained denoiser and an order-3 AR energy.

use std::sync::Arc;

use edlm_core::corpus::{chunk, synthetic_grammar_text};
use edlm_core::models::{DenoiserTrainConfig, DEFAULT_CONTEXT_RADIUS};
use edlm_core::{ar_fit, EnergyModel, FactorizedDenoiser, NceEnergy, NoiseSchedule, SeedTree, TokenSeq, Vocabulary};

pub struct Fixture {
    pub denoiser: FactorizedDenoiser,
    pub ar: EnergyModel,
    pub coar: EnergyModel,
    pub nce: EnergyModel,
    pub schedule: NoiseSchedule,
    pub docs: Vec<TokenSeq>,
    pub seq_len: usize,
}

impl Fixture {
    pub fn new(seq_len: usize) -> Self {
        let tree = SeedTree::new(0);
        let vocab = Vocabulary::text8();
        let v = vocab.size();
        let text = synthetic_grammar_text(50_000, &mut tree.stream("bench/corpus"));
        let tokens = vocab.encode(&text).expect("grammar text is in the text8 vocabulary");
        let docs = chunk(&tokens, seq_len, v).expect("corpus longer than one chunk");
        let schedule = NoiseSchedule::linear();
        let mut denoiser = FactorizedDenoiser::new(v, DEFAULT_CONTEXT_RADIUS).expect("valid denoiser shape");
        let cfg = DenoiserTrainConfig { steps: 200, lr: 0.5, batch_size: 16 };
        denoiser.train(&docs, &schedule, &cfg, &mut tree.stream("bench/train")).expect("training runs");
        let ar = Arc::new(ar_fit(&tokens, v, 3, 0.1).expect("valid n-gram settings"));
        Self {
            denoiser,
            ar: EnergyModel::Ar(ar.clone()),
            coar: EnergyModel::CoAr(ar),
            nce: EnergyModel::Nce(NceEnergy::new(v).expect("valid vocabulary size")),
            schedule,
            docs,
            seq_len,
        }
    }
}
