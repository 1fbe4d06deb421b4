//! Dataset construction and delivery: burst-noise corpus synthesis,
//! degradation-generated pairs, manifest handling, and patch sampling.

pub mod gmsr;
pub mod manifest;
pub mod sampler;
pub mod synth;

pub use gmsr::{synthesize_gmsr, GmsrOutcome};
pub use manifest::{load_manifest, save_manifest, PairEntry, PairManifest, PartnerRole};
pub use sampler::{sample_batch, Batch, SampleOptions, Sampler};
pub use synth::{synth_burst_corpus, SynthConfig};
