//! Three-stage optimization engine. Stage A trains the degradation
//! generator against its discriminator, stage B the SR generator against
//! its own, and the joint stage fine-tunes the composed chain with both
//! discriminators active. Single-writer loop; every randomized quantity
//! derives from (seed, iteration), so runs replay bit-exactly and resume
//! from any checkpoint without drift.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array4, ArrayD};
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::schedule::{lr_at, LrSchedule};
use crate::data::{Batch, PairManifest, SampleOptions, Sampler};
use crate::error::{Error, Result};
use crate::losses::{
    combine, discriminator_loss_grad, feature_loss_grad, generator_gan_loss_grad,
    pixel_loss_grad, LossReport, LossWeights, Stage,
};
use crate::nn::checkpoint::Archive;
use crate::nn::{build_network, FeatureExtractor, GradStore, NetworkSpec, NetworkState};
use crate::seed::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub stage: Stage,
    pub iterations: u64,
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr_schedule: LrSchedule,
    pub adam: AdamHyper,
    pub weights: LossWeights,
    pub seed: u64,
    pub d_steps_per_g_step: usize,
    /// Gaussian input-plane std for the degradation stage.
    pub noise_std: f64,
    /// Fraction of SR-stage samples drawn from generated-LR entries.
    pub mix_ratio: f64,
    /// 0 disables periodic checkpoints; a final one is always written.
    pub checkpoint_every: u64,
}

impl TrainPlan {
    pub fn desk_default(stage: Stage) -> Self {
        TrainPlan {
            stage,
            iterations: 2000,
            batch_size: 4,
            patch_size: 96,
            lr_schedule: LrSchedule::default(),
            adam: AdamHyper::default(),
            weights: LossWeights::default(),
            seed: 0,
            d_steps_per_g_step: 1,
            noise_std: 0.05,
            mix_ratio: 0.5,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Argument("iterations must be > 0".into()));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::Argument("batch_size and patch_size must be > 0".into()));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Argument("d_steps_per_g_step must be >= 1".into()));
        }
        self.lr_schedule.validate()?;
        self.weights.validate()?;
        Ok(())
    }
}

/// A trainable network plus its optimizer moments.
#[derive(Debug, Clone)]
pub struct NetSlot {
    pub net: NetworkState,
    pub opt: AdamState,
}

impl NetSlot {
    pub fn new(net: NetworkState) -> Self {
        let opt = AdamState::zeros_like(&net.params);
        NetSlot { net, opt }
    }
}

const HISTORY_CAP: usize = 1000;

#[derive(Debug, Clone)]
pub struct TrainState {
    pub stage: Stage,
    pub iteration: u64,
    pub gen_h2l: Option<NetSlot>,
    pub disc_h2l: Option<NetSlot>,
    pub gen_l2h: Option<NetSlot>,
    pub disc_l2h: Option<NetSlot>,
    pub fx: FeatureExtractor,
    pub history: VecDeque<LossReport>,
}

impl TrainState {
    pub fn new_h2l(gen: NetworkState, disc: NetworkState, fx: FeatureExtractor) -> Self {
        TrainState {
            stage: Stage::H2l,
            iteration: 0,
            gen_h2l: Some(NetSlot::new(gen)),
            disc_h2l: Some(NetSlot::new(disc)),
            gen_l2h: None,
            disc_l2h: None,
            fx,
            history: VecDeque::new(),
        }
    }

    pub fn new_l2h(gen: NetworkState, disc: NetworkState, fx: FeatureExtractor) -> Self {
        TrainState {
            stage: Stage::L2h,
            iteration: 0,
            gen_h2l: None,
            disc_h2l: None,
            gen_l2h: Some(NetSlot::new(gen)),
            disc_l2h: Some(NetSlot::new(disc)),
            fx,
            history: VecDeque::new(),
        }
    }

    pub fn new_joint(
        gen_h2l: NetworkState,
        gen_l2h: NetworkState,
        disc_h2l: NetworkState,
        disc_l2h: NetworkState,
        fx: FeatureExtractor,
    ) -> Self {
        TrainState {
            stage: Stage::Joint,
            iteration: 0,
            gen_h2l: Some(NetSlot::new(gen_h2l)),
            disc_h2l: Some(NetSlot::new(disc_h2l)),
            gen_l2h: Some(NetSlot::new(gen_l2h)),
            disc_l2h: Some(NetSlot::new(disc_l2h)),
            fx,
            history: VecDeque::new(),
        }
    }

    fn push_history(&mut self, report: LossReport) {
        if self.history.len() == HISTORY_CAP {
            self.history.pop_front();
        }
        self.history.push_back(report);
    }

    /// Hash over every parameter and optimizer moment; the determinism
    /// tests compare these.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.iteration.to_le_bytes());
        for slot in [&self.gen_h2l, &self.disc_h2l, &self.gen_l2h, &self.disc_l2h]
            .into_iter()
            .flatten()
        {
            hasher.update(slot.net.params.content_hash().as_bytes());
            hasher.update(slot.opt.t.to_le_bytes());
            for m in slot.opt.m.iter().chain(slot.opt.v.iter()) {
                for v in m.iter() {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        crate::nn::store::hex_string(&hasher.finalize())
    }
}

fn ensure_finite(report: &LossReport, iteration: u64) -> Result<()> {
    if !report.is_finite() {
        return Err(Error::Numeric {
            iteration,
            detail: format!(
                "non-finite loss (pixel {}, feature {}, gan {})",
                report.pixel, report.feature, report.adversarial
            ),
        });
    }
    Ok(())
}

struct DiscUpdate {
    loss: f64,
}

/// One discriminator update on (real, fake); fake is treated as constant.
fn update_discriminator(
    slot: &mut NetSlot,
    real: &Array4<f64>,
    fake: &Array4<f64>,
    lr: f64,
    hyper: &AdamHyper,
    iteration: u64,
) -> Result<DiscUpdate> {
    let mut gs = GradStore::zeros_like(&slot.net.params);
    let loss;
    {
        let layout = slot.net.as_disc()?;
        let (real_logits, real_cache) = layout.forward_train(&slot.net.params, real)?;
        let (fake_logits, fake_cache) = layout.forward_train(&slot.net.params, fake)?;
        let (l, g_real, g_fake) = discriminator_loss_grad(&real_logits, &fake_logits)?;
        loss = l;
        layout.backward(&slot.net.params, &real_cache, &g_real, &mut gs);
        layout.backward(&slot.net.params, &fake_cache, &g_fake, &mut gs);
    }
    adam_step(&mut slot.net.params, &gs, &mut slot.opt, lr, hyper, iteration)?;
    Ok(DiscUpdate { loss })
}

struct GanPull {
    loss: f64,
    grad: Array4<f64>,
}

/// Generator-side GAN loss and its gradient w.r.t. the generated batch,
/// evaluated against a frozen discriminator.
fn gan_pull(disc: &NetworkState, fake: &Array4<f64>) -> Result<GanPull> {
    let layout = disc.as_disc()?;
    let (logits, cache) = layout.forward_train(&disc.params, fake)?;
    let (loss, g_logits) = generator_gan_loss_grad(&logits)?;
    let mut scratch = GradStore::zeros_like(&disc.params);
    let grad = layout.backward(&disc.params, &cache, &g_logits, &mut scratch);
    Ok(GanPull { loss, grad })
}

/// Pixel/feature/GAN losses and the total gradient w.r.t. `pred`.
#[allow(clippy::too_many_arguments)]
fn generator_losses(
    pred: &Array4<f64>,
    target: &Array4<f64>,
    fx: &FeatureExtractor,
    disc: Option<&NetworkState>,
    wp: f64,
    wf: f64,
    wg: f64,
) -> Result<(f64, f64, f64, Array4<f64>)> {
    let (pixel, g_pix) = pixel_loss_grad(pred, target)?;
    let mut grad = g_pix * wp;
    let feature = if wf > 0.0 {
        let (f, g_feat) = feature_loss_grad(pred, target, fx)?;
        grad += &(g_feat * wf);
        f
    } else {
        0.0
    };
    let adversarial = match disc {
        Some(d) if wg > 0.0 => {
            let pull = gan_pull(d, pred)?;
            grad += &(pull.grad * wg);
            pull.loss
        }
        _ => 0.0,
    };
    Ok((pixel, feature, adversarial, grad))
}

/// Stage A step: discriminator update(s) on (unpaired crops, generated LR),
/// then a generator update anchored to the downsampled noisy target.
pub fn train_h2l_step(state: &mut TrainState, batch: &Batch, plan: &TrainPlan) -> Result<LossReport> {
    if state.stage != Stage::H2l {
        return Err(Error::State(format!("train_h2l_step in stage {}", state.stage)));
    }
    let iteration = state.iteration;
    let lr_now = lr_at(&plan.lr_schedule, iteration);
    let (wp, wf, wg) = plan.weights.for_stage(Stage::H2l);
    let noise = batch
        .noise
        .as_ref()
        .ok_or_else(|| Error::Argument("H2L batch is missing noise planes".into()))?;

    let gan_active = wg > 0.0;
    if gan_active && batch.unpaired.is_none() {
        return Err(Error::Validation {
            issues: vec!["GAN weight is positive but the manifest has no unpaired noisy data".into()],
        });
    }

    // generator forward (reused for both the D update and the G update)
    let gen = state.gen_h2l.as_mut().expect("stage checked");
    let (fake, cache) = {
        let layout = gen.net.as_h2l()?;
        layout.forward_train(&gen.net.params, &batch.hr, noise)?
    };

    if gan_active {
        let disc = state.disc_h2l.as_mut().expect("stage checked");
        let real = batch.unpaired.as_ref().expect("checked above");
        for _ in 0..plan.d_steps_per_g_step {
            update_discriminator(disc, real, &fake, lr_now, &plan.adam, iteration)?;
        }
    }

    let disc_ref = if gan_active {
        Some(&state.disc_h2l.as_ref().expect("stage checked").net)
    } else {
        None
    };
    let (pixel, feature, adversarial, g_fake) =
        generator_losses(&fake, &batch.lr, &state.fx, disc_ref, wp, wf, wg)?;

    let gen = state.gen_h2l.as_mut().expect("stage checked");
    let mut gs = GradStore::zeros_like(&gen.net.params);
    {
        let layout = gen.net.as_h2l()?;
        layout.backward(&gen.net.params, &cache, &g_fake, &mut gs);
    }
    adam_step(&mut gen.net.params, &gs, &mut gen.opt, lr_now, &plan.adam, iteration)?;

    let report = combine(pixel, feature, adversarial, &plan.weights, Stage::H2l);
    ensure_finite(&report, iteration)?;
    state.push_history(report);
    state.iteration += 1;
    Ok(report)
}

/// Stage B step: mirror of stage A with the SR generator; the discriminator
/// separates real HR patches from super-resolved ones.
pub fn train_l2h_step(state: &mut TrainState, batch: &Batch, plan: &TrainPlan) -> Result<LossReport> {
    if state.stage != Stage::L2h {
        return Err(Error::State(format!("train_l2h_step in stage {}", state.stage)));
    }
    let iteration = state.iteration;
    let lr_now = lr_at(&plan.lr_schedule, iteration);
    let (wp, wf, wg) = plan.weights.for_stage(Stage::L2h);
    let gan_active = wg > 0.0;

    let gen = state.gen_l2h.as_mut().expect("stage checked");
    let (fake, cache) = {
        let layout = gen.net.as_l2h()?;
        layout.forward_train(&gen.net.params, &batch.lr)?
    };

    if gan_active {
        let disc = state.disc_l2h.as_mut().expect("stage checked");
        for _ in 0..plan.d_steps_per_g_step {
            update_discriminator(disc, &batch.hr, &fake, lr_now, &plan.adam, iteration)?;
        }
    }

    let disc_ref = if gan_active {
        Some(&state.disc_l2h.as_ref().expect("stage checked").net)
    } else {
        None
    };
    let (pixel, feature, adversarial, g_fake) =
        generator_losses(&fake, &batch.hr, &state.fx, disc_ref, wp, wf, wg)?;

    let gen = state.gen_l2h.as_mut().expect("stage checked");
    let mut gs = GradStore::zeros_like(&gen.net.params);
    {
        let layout = gen.net.as_l2h()?;
        layout.backward(&gen.net.params, &cache, &g_fake, &mut gs);
    }
    adam_step(&mut gen.net.params, &gs, &mut gen.opt, lr_now, &plan.adam, iteration)?;

    let report = combine(pixel, feature, adversarial, &plan.weights, Stage::L2h);
    ensure_finite(&report, iteration)?;
    state.push_history(report);
    state.iteration += 1;
    Ok(report)
}

/// Joint step: the composed chain HR -> LR' -> HR'' trains both generators
/// at once. Anchors are retained at both stages (LR' to the downsampled
/// noisy target, HR'' to the clean HR); both discriminators update. The
/// report aggregates both stages, so total = h2l_total + l2h_total.
pub fn train_joint_step(state: &mut TrainState, batch: &Batch, plan: &TrainPlan) -> Result<LossReport> {
    if state.stage != Stage::Joint {
        return Err(Error::State(format!("train_joint_step in stage {}", state.stage)));
    }
    let iteration = state.iteration;
    let lr_now = lr_at(&plan.lr_schedule, iteration);
    let (wp1, wf1, wg1) = plan.weights.for_stage(Stage::H2l);
    let (wp2, wf2, wg2) = plan.weights.for_stage(Stage::L2h);
    let noise = batch
        .noise
        .as_ref()
        .ok_or_else(|| Error::Argument("joint batch is missing noise planes".into()))?;
    if wg1 > 0.0 && batch.unpaired.is_none() {
        return Err(Error::Validation {
            issues: vec!["H2L GAN weight is positive but no unpaired noisy data is present".into()],
        });
    }

    // forward chain
    let (fake_lr, h2l_cache) = {
        let gen = state.gen_h2l.as_ref().expect("stage checked");
        let layout = gen.net.as_h2l()?;
        layout.forward_train(&gen.net.params, &batch.hr, noise)?
    };
    let (fake_hr, l2h_cache) = {
        let gen = state.gen_l2h.as_ref().expect("stage checked");
        let layout = gen.net.as_l2h()?;
        layout.forward_train(&gen.net.params, &fake_lr)?
    };

    // discriminator updates
    if wg1 > 0.0 {
        let disc = state.disc_h2l.as_mut().expect("stage checked");
        let real = batch.unpaired.as_ref().expect("checked above");
        for _ in 0..plan.d_steps_per_g_step {
            update_discriminator(disc, real, &fake_lr, lr_now, &plan.adam, iteration)?;
        }
    }
    if wg2 > 0.0 {
        let disc = state.disc_l2h.as_mut().expect("stage checked");
        for _ in 0..plan.d_steps_per_g_step {
            update_discriminator(disc, &batch.hr, &fake_hr, lr_now, &plan.adam, iteration)?;
        }
    }

    // generator losses at both ends of the chain
    let disc_h2l_ref = if wg1 > 0.0 {
        Some(&state.disc_h2l.as_ref().expect("stage checked").net)
    } else {
        None
    };
    let (pix_h, feat_h, gan_h, g_lr_direct) =
        generator_losses(&fake_lr, &batch.lr, &state.fx, disc_h2l_ref, wp1, wf1, wg1)?;

    let disc_l2h_ref = if wg2 > 0.0 {
        Some(&state.disc_l2h.as_ref().expect("stage checked").net)
    } else {
        None
    };
    let (pix_l, feat_l, gan_l, g_hr) =
        generator_losses(&fake_hr, &batch.hr, &state.fx, disc_l2h_ref, wp2, wf2, wg2)?;

    // backprop through the SR generator, chaining into the degradation net
    let gen_l2h = state.gen_l2h.as_mut().expect("stage checked");
    let mut gs_l2h = GradStore::zeros_like(&gen_l2h.net.params);
    let g_lr_via_chain = {
        let layout = gen_l2h.net.as_l2h()?;
        layout.backward(&gen_l2h.net.params, &l2h_cache, &g_hr, &mut gs_l2h)
    };
    adam_step(&mut gen_l2h.net.params, &gs_l2h, &mut gen_l2h.opt, lr_now, &plan.adam, iteration)?;

    let g_lr_total = &g_lr_direct + &g_lr_via_chain;
    let gen_h2l = state.gen_h2l.as_mut().expect("stage checked");
    let mut gs_h2l = GradStore::zeros_like(&gen_h2l.net.params);
    {
        let layout = gen_h2l.net.as_h2l()?;
        layout.backward(&gen_h2l.net.params, &h2l_cache, &g_lr_total, &mut gs_h2l);
    }
    adam_step(&mut gen_h2l.net.params, &gs_h2l, &mut gen_h2l.opt, lr_now, &plan.adam, iteration)?;

    let total = wp1 * pix_h + wf1 * feat_h + wg1 * gan_h + wp2 * pix_l + wf2 * feat_l + wg2 * gan_l;
    let report = LossReport {
        pixel: pix_h + pix_l,
        feature: feat_h + feat_l,
        adversarial: gan_h + gan_l,
        total,
        stage: Stage::Joint,
    };
    ensure_finite(&report, iteration)?;
    state.push_history(report);
    state.iteration += 1;
    Ok(report)
}

pub fn train_step(state: &mut TrainState, batch: &Batch, plan: &TrainPlan) -> Result<LossReport> {
    match state.stage {
        Stage::H2l => train_h2l_step(state, batch, plan),
        Stage::L2h => train_l2h_step(state, batch, plan),
        Stage::Joint => train_joint_step(state, batch, plan),
    }
}

#[derive(Debug, Serialize)]
struct LogRecord<'a> {
    iter: u64,
    stage: &'a str,
    lr: f64,
    pixel: f64,
    feature: f64,
    gan: f64,
    total: f64,
}

pub struct RunOutcome {
    pub state: TrainState,
    pub log_path: PathBuf,
    pub state_checkpoint: PathBuf,
    /// Network checkpoints for the trained generator(s).
    pub generator_checkpoints: Vec<PathBuf>,
}

/// Execute the plan from wherever `state.iteration` stands, appending one
/// log record per iteration and checkpointing on the configured cadence.
pub fn run(
    plan: &TrainPlan,
    manifest: &PairManifest,
    data_base: &Path,
    out_dir: &Path,
    mut state: TrainState,
) -> Result<RunOutcome> {
    plan.validate()?;
    if state.stage != plan.stage {
        return Err(Error::State(format!(
            "plan stage {} does not match state stage {}",
            plan.stage, state.stage
        )));
    }
    let logs_dir = out_dir.join("logs");
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&logs_dir)?;
    std::fs::create_dir_all(&ckpt_dir)?;
    let log_path = logs_dir.join(format!("train_{}.jsonl", plan.stage));
    let mut log = std::fs::OpenOptions::new().create(true).append(true).open(&log_path)?;

    let sampler = Sampler::new(
        manifest.clone(),
        data_base,
        SampleOptions { noise_std: plan.noise_std, mix_ratio: plan.mix_ratio },
    );
    let stage_name = plan.stage.to_string();

    while state.iteration < plan.iterations {
        let it = state.iteration;
        let batch_seed = seed::mix(plan.seed, &[tag::ITER, it]);
        let batch = sampler.sample(plan.batch_size, plan.patch_size, plan.stage, batch_seed)?;
        let report = train_step(&mut state, &batch, plan)?;
        let record = LogRecord {
            iter: it,
            stage: &stage_name,
            lr: lr_at(&plan.lr_schedule, it),
            pixel: report.pixel,
            feature: report.feature,
            gan: report.adversarial,
            total: report.total,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::format(e.to_string()))?;
        writeln!(log, "{line}")?;
        if plan.checkpoint_every > 0 && state.iteration % plan.checkpoint_every == 0 {
            let path = ckpt_dir.join(format!("{}_iter{:06}.ckpt", plan.stage, state.iteration));
            save_train_state(&state, &path)?;
        }
    }
    log.flush()?;

    let state_checkpoint = ckpt_dir.join(format!("{}_final.ckpt", plan.stage));
    save_train_state(&state, &state_checkpoint)?;

    let mut generator_checkpoints = Vec::new();
    if let Some(slot) = &state.gen_h2l {
        let p = ckpt_dir.join("gen_h2l.ckpt");
        crate::nn::checkpoint::save_network(&slot.net, &p)?;
        generator_checkpoints.push(p);
    }
    if let Some(slot) = &state.gen_l2h {
        let p = ckpt_dir.join("gen_l2h.ckpt");
        crate::nn::checkpoint::save_network(&slot.net, &p)?;
        generator_checkpoints.push(p);
    }

    Ok(RunOutcome { state, log_path, state_checkpoint, generator_checkpoints })
}

#[derive(Serialize, Deserialize)]
struct SlotMeta {
    spec: NetworkSpec,
    init_seed: u64,
    adam_t: u64,
}

#[derive(Serialize, Deserialize)]
struct TrainMeta {
    format: String,
    version: u32,
    stage: Stage,
    iteration: u64,
    history: Vec<LossReport>,
    fx_spec: NetworkSpec,
    fx_init_seed: u64,
    fx_tap: usize,
    slots: Vec<(String, SlotMeta)>,
}

const ROLES: [&str; 4] = ["gen_h2l", "disc_h2l", "gen_l2h", "disc_l2h"];

fn slot_of<'a>(state: &'a TrainState, role: &str) -> &'a Option<NetSlot> {
    match role {
        "gen_h2l" => &state.gen_h2l,
        "disc_h2l" => &state.disc_h2l,
        "gen_l2h" => &state.gen_l2h,
        _ => &state.disc_l2h,
    }
}

pub fn save_train_state(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let mut slots = Vec::new();
    let mut tensors: Vec<(String, ArrayD<f64>)> = Vec::new();
    for role in ROLES {
        if let Some(slot) = slot_of(state, role) {
            slots.push((
                role.to_string(),
                SlotMeta {
                    spec: slot.net.spec,
                    init_seed: slot.net.init_seed,
                    adam_t: slot.opt.t,
                },
            ));
            for e in slot.net.params.iter() {
                tensors.push((format!("{role}/param/{}", e.name), e.value.clone()));
            }
            for (i, m) in slot.opt.m.iter().enumerate() {
                tensors.push((format!("{role}/adam_m/{}", slot.net.params.name(i)), m.clone()));
            }
            for (i, v) in slot.opt.v.iter().enumerate() {
                tensors.push((format!("{role}/adam_v/{}", slot.net.params.name(i)), v.clone()));
            }
        }
    }
    for e in state.fx.state.params.iter() {
        tensors.push((format!("fx/param/{}", e.name), e.value.clone()));
    }
    let meta = serde_json::to_value(TrainMeta {
        format: "srdgan-train".into(),
        version: 1,
        stage: state.stage,
        iteration: state.iteration,
        history: state.history.iter().copied().collect(),
        fx_spec: state.fx.state.spec,
        fx_init_seed: state.fx.state.init_seed,
        fx_tap: state.fx.tap,
        slots,
    })
    .map_err(|e| Error::format(e.to_string()))?;
    Archive { meta, tensors }.write(path)
}

pub fn load_train_state(path: impl AsRef<Path>) -> Result<TrainState> {
    let archive = Archive::read(path.as_ref())?;
    let meta: TrainMeta = serde_json::from_value(archive.meta.clone())
        .map_err(|e| Error::format(format!("bad train checkpoint metadata: {e}")))?;
    if meta.format != "srdgan-train" || meta.version != 1 {
        return Err(Error::format(format!(
            "unsupported train checkpoint ({} v{})",
            meta.format, meta.version
        )));
    }
    let mut by_name: std::collections::HashMap<String, ArrayD<f64>> =
        archive.tensors.into_iter().collect();

    let mut load_slot = |role: &str, sm: &SlotMeta| -> Result<NetSlot> {
        let mut net = build_network(&sm.spec, sm.init_seed)?;
        let values: Result<Vec<(String, ArrayD<f64>)>> = net
            .params
            .iter()
            .map(|e| {
                let key = format!("{role}/param/{}", e.name);
                by_name
                    .remove(&key)
                    .map(|t| (e.name.clone(), t))
                    .ok_or_else(|| Error::spec(format!("checkpoint missing tensor {key}")))
            })
            .collect();
        net.params.load_values(&values?)?;
        let mut opt = AdamState::zeros_like(&net.params);
        opt.t = sm.adam_t;
        for i in 0..net.params.len() {
            let name = net.params.name(i).to_string();
            opt.m[i] = by_name
                .remove(&format!("{role}/adam_m/{name}"))
                .ok_or_else(|| Error::spec(format!("checkpoint missing adam_m for {name}")))?;
            opt.v[i] = by_name
                .remove(&format!("{role}/adam_v/{name}"))
                .ok_or_else(|| Error::spec(format!("checkpoint missing adam_v for {name}")))?;
        }
        Ok(NetSlot { net, opt })
    };

    let mut slots: std::collections::HashMap<String, NetSlot> = std::collections::HashMap::new();
    for (role, sm) in &meta.slots {
        slots.insert(role.clone(), load_slot(role, sm)?);
    }

    let mut fx_net = build_network(&meta.fx_spec, meta.fx_init_seed)?;
    let fx_values: Result<Vec<(String, ArrayD<f64>)>> = fx_net
        .params
        .iter()
        .map(|e| {
            let key = format!("fx/param/{}", e.name);
            by_name
                .remove(&key)
                .map(|t| (e.name.clone(), t))
                .ok_or_else(|| Error::spec(format!("checkpoint missing tensor {key}")))
        })
        .collect();
    fx_net.params.load_values(&fx_values?)?;
    let fx = FeatureExtractor::new(fx_net, meta.fx_tap)?;

    Ok(TrainState {
        stage: meta.stage,
        iteration: meta.iteration,
        gen_h2l: slots.remove("gen_h2l"),
        disc_h2l: slots.remove("disc_h2l"),
        gen_l2h: slots.remove("gen_l2h"),
        disc_l2h: slots.remove("disc_l2h"),
        fx,
        history: meta.history.into(),
    })
}
