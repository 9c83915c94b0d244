use super::gru::{GruCache, GruWeights};
use super::kernels::{log_softmax, matvec, matvec_t_add, outer_add, softmax_into};
use super::params::{ModelConfig, ModelParams};
use crate::dsp::{MelSpectrogram, MuLaw, MuLawClass};
use crate::error::{Error, Result};

/// Frame-rate conditioning features, `n_frames x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub n_frames: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FrameFeatures {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn reversed(&self) -> Self {
        let data = (0..self.n_frames)
            .rev()
            .flat_map(|t| self.frame(t).iter().copied())
            .collect();
        Self { data, ..*self }
    }
}

/// Recurrent state of the sample-rate network.
#[derive(Debug, Clone, PartialEq)]
pub struct ArState {
    pub hidden: Vec<f64>,
    pub prev_class: MuLawClass,
}

impl ArState {
    /// Zero hidden state, previous sample = encoded zero amplitude.
    pub fn initial(config: &ModelConfig) -> Self {
        let codec = MuLaw::new(config.n_classes).expect("validated n_classes");
        Self {
            hidden: vec![0.0; config.ar_hidden],
            prev_class: codec.zero_class(),
        }
    }
}

struct BiLayer {
    out: Vec<f64>,
    fwd: Vec<GruCache>,
    bwd: Vec<GruCache>,
}

/// Runs a forward and a backward GRU over `n_frames` rows of `input` and
/// concatenates their hidden states per frame.
fn bi_layer(
    input: &[f64],
    n_frames: usize,
    fwd: &GruWeights,
    bwd: &GruWeights,
    keep_cache: bool,
) -> BiLayer {
    let in_dim = fwd.input_dim;
    let c = fwd.hidden;
    let mut out = vec![0.0; n_frames * 2 * c];
    let mut fwd_cache = Vec::with_capacity(if keep_cache { n_frames } else { 0 });
    let mut bwd_cache: Vec<Option<GruCache>> = vec![None; if keep_cache { n_frames } else { 0 }];

    let mut h = vec![0.0; c];
    let mut next = vec![0.0; c];
    for t in 0..n_frames {
        let x = &input[t * in_dim..(t + 1) * in_dim];
        if keep_cache {
            fwd_cache.push(fwd.step_cached(x, &h, &mut next));
        } else {
            fwd.step_into(x, &h, &mut next);
        }
        std::mem::swap(&mut h, &mut next);
        out[t * 2 * c..t * 2 * c + c].copy_from_slice(&h);
    }
    h.fill(0.0);
    for t in (0..n_frames).rev() {
        let x = &input[t * in_dim..(t + 1) * in_dim];
        if keep_cache {
            bwd_cache[t] = Some(bwd.step_cached(x, &h, &mut next));
        } else {
            bwd.step_into(x, &h, &mut next);
        }
        std::mem::swap(&mut h, &mut next);
        out[t * 2 * c + c..(t + 1) * 2 * c].copy_from_slice(&h);
    }
    BiLayer {
        out,
        fwd: fwd_cache,
        bwd: bwd_cache.into_iter().flatten().collect(),
    }
}

/// Backpropagates `dout` (`n_frames x 2C`) through a bidirectional layer,
/// returning `dL/dinput` when `want_input_grad`.
fn bi_layer_backward(
    layer: &BiLayer,
    dout: &[f64],
    fwd: &GruWeights,
    bwd: &GruWeights,
    gfwd: &mut GruWeights,
    gbwd: &mut GruWeights,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let n_frames = layer.fwd.len();
    let c = fwd.hidden;
    let in_dim = fwd.input_dim;
    let mut din = want_input_grad.then(|| vec![0.0; n_frames * in_dim]);
    let mut carry = vec![0.0; c];
    let mut dh = vec![0.0; c];

    for t in (0..n_frames).rev() {
        for i in 0..c {
            dh[i] = dout[t * 2 * c + i] + carry[i];
        }
        let dx = din.as_mut().map(|d| &mut d[t * in_dim..(t + 1) * in_dim]);
        fwd.backward(&layer.fwd[t], &dh, gfwd, dx, &mut carry);
    }
    carry.fill(0.0);
    for t in 0..n_frames {
        for i in 0..c {
            dh[i] = dout[t * 2 * c + c + i] + carry[i];
        }
        let dx = din.as_mut().map(|d| &mut d[t * in_dim..(t + 1) * in_dim]);
        bwd.backward(&layer.bwd[t], &dh, gbwd, dx, &mut carry);
    }
    din
}

fn check_mel(mel: &MelSpectrogram, config: &ModelConfig) -> Result<()> {
    if mel.n_mels() != config.n_mels {
        return Err(Error::Shape(format!(
            "spectrogram has {} mel bands, model expects {}",
            mel.n_mels(),
            config.n_mels
        )));
    }
    if mel.is_empty() {
        return Err(Error::Input("empty spectrogram".into()));
    }
    Ok(())
}

struct ConditioningPass {
    layer1: BiLayer,
    layer2: BiLayer,
}

fn conditioning_pass(mel: &MelSpectrogram, params: &ModelParams, keep_cache: bool) -> ConditioningPass {
    let input: Vec<f64> = mel.data().iter().map(|&v| v as f64).collect();
    let n = mel.n_frames();
    let layer1 = bi_layer(&input, n, &params.cond_gru_1_fwd, &params.cond_gru_1_bwd, keep_cache);
    let layer2 = bi_layer(&layer1.out, n, &params.cond_gru_2_fwd, &params.cond_gru_2_bwd, keep_cache);
    ConditioningPass { layer1, layer2 }
}

/// Two stacked bidirectional GRU layers over the mel frames.
pub fn conditioning_forward(
    mel: &MelSpectrogram,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<FrameFeatures> {
    check_mel(mel, config)?;
    let pass = conditioning_pass(mel, params, false);
    Ok(FrameFeatures {
        n_frames: mel.n_frames(),
        dim: config.cond_dim(),
        data: pass.layer2.out,
    })
}

/// Nearest-neighbour hold: sample `i` gets the features of frame `i / hop`.
pub fn upsample_conditioning(features: &FrameFeatures, hop: usize) -> Vec<Vec<f64>> {
    (0..features.n_frames * hop)
        .map(|i| features.frame(i / hop).to_vec())
        .collect()
}

/// Scratch buffers for one autoregressive step.
pub(crate) struct ArStepper<'a> {
    params: &'a ModelParams,
    codec: MuLaw,
    x: Vec<f64>,
    next: Vec<f64>,
    pub(crate) hidden: Vec<f64>,
    pub(crate) act: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

impl<'a> ArStepper<'a> {
    pub(crate) fn new(params: &'a ModelParams, config: &ModelConfig) -> Self {
        Self {
            params,
            codec: MuLaw::new(config.n_classes).expect("validated n_classes"),
            x: vec![0.0; config.ar_input_dim()],
            next: vec![0.0; config.ar_hidden],
            hidden: vec![0.0; config.ar_hidden],
            act: vec![0.0; config.ar_hidden],
            logits: vec![0.0; config.n_classes],
        }
    }

    pub(crate) fn codec(&self) -> &MuLaw {
        &self.codec
    }

    fn load_input(&mut self, prev: MuLawClass, cond: &[f64]) {
        self.x[0] = self.codec.decode(prev);
        self.x[1..].copy_from_slice(cond);
    }

    fn head(&mut self) {
        let p = self.params;
        matvec(&p.affine_a.w, p.affine_a.inputs, &self.hidden, &mut self.act);
        for (a, b) in self.act.iter_mut().zip(&p.affine_a.b) {
            *a = (*a + b).max(0.0);
        }
        matvec(&p.affine_b.w, p.affine_b.inputs, &self.act, &mut self.logits);
        for (l, b) in self.logits.iter_mut().zip(&p.affine_b.b) {
            *l += b;
        }
    }

    /// Advances the hidden state and leaves the logits in `self.logits`.
    pub(crate) fn step(&mut self, prev: MuLawClass, cond: &[f64]) {
        self.load_input(prev, cond);
        self.params.ar_gru.step_into(&self.x, &self.hidden, &mut self.next);
        std::mem::swap(&mut self.hidden, &mut self.next);
        self.head();
    }

    fn step_cached(&mut self, prev: MuLawClass, cond: &[f64]) -> GruCache {
        self.load_input(prev, cond);
        let cache = self.params.ar_gru.step_cached(&self.x, &self.hidden, &mut self.next);
        std::mem::swap(&mut self.hidden, &mut self.next);
        self.head();
        cache
    }
}

/// One step of the sample-rate network: returns the logits for the next
/// sample and the advanced state (whose `prev_class` is left for the caller
/// to set once a class has been chosen).
pub fn ar_step(
    state: &ArState,
    cond: &[f64],
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Vec<f64>, ArState)> {
    if cond.len() != config.cond_dim() || state.hidden.len() != config.ar_hidden {
        return Err(Error::Shape(format!(
            "ar_step expects cond {} and hidden {}, got {} and {}",
            config.cond_dim(),
            config.ar_hidden,
            cond.len(),
            state.hidden.len()
        )));
    }
    if state.prev_class.index() >= config.n_classes {
        return Err(Error::InputDomain(format!(
            "previous class {} outside [0, {})",
            state.prev_class.index(),
            config.n_classes
        )));
    }
    let mut stepper = ArStepper::new(params, config);
    stepper.hidden.copy_from_slice(&state.hidden);
    stepper.step(state.prev_class, cond);
    let new_state = ArState {
        hidden: stepper.hidden.clone(),
        prev_class: state.prev_class,
    };
    Ok((stepper.logits, new_state))
}

struct ArRecord {
    gru: GruCache,
    act: Vec<f64>,
}

/// Everything `backward` needs from a teacher-forced forward pass.
pub struct TeacherForcedPass {
    config: ModelConfig,
    frame_offset: usize,
    targets: Vec<MuLawClass>,
    logits: Vec<Vec<f64>>,
    conditioning: ConditioningPass,
    steps: Vec<ArRecord>,
}

impl TeacherForcedPass {
    /// `(N - 1) x n_classes`; row `t - 1` predicts sample `t`.
    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn targets(&self) -> &[MuLawClass] {
        &self.targets
    }

    pub fn loss(&self) -> f64 {
        nll_loss(&self.logits, &self.targets).expect("lengths match by construction")
    }
}

fn check_alignment(
    classes: &[MuLawClass],
    mel: &MelSpectrogram,
    frame_offset: usize,
    config: &ModelConfig,
) -> Result<()> {
    check_mel(mel, config)?;
    if !classes.len().is_multiple_of(config.hop) || frame_offset + classes.len() / config.hop > mel.n_frames() {
        return Err(Error::Input(format!(
            "{} samples from frame {frame_offset} do not align with {} frames x hop {}",
            classes.len(),
            mel.n_frames(),
            config.hop
        )));
    }
    if classes.len() < 2 {
        return Err(Error::Input("need at least two samples".into()));
    }
    if let Some(c) = classes.iter().find(|c| c.index() >= config.n_classes) {
        return Err(Error::InputDomain(format!(
            "class {} outside [0, {})",
            c.index(),
            config.n_classes
        )));
    }
    Ok(())
}

fn check_exact(classes: &[MuLawClass], mel: &MelSpectrogram, config: &ModelConfig) -> Result<()> {
    let expected = mel.n_frames() * config.hop;
    if classes.len() != expected {
        return Err(Error::Input(format!(
            "{} samples do not align with {} frames x hop {} = {expected}",
            classes.len(),
            mel.n_frames(),
            config.hop
        )));
    }
    Ok(())
}

/// Teacher-forced forward pass: for each `t` in `1..N`, predicts class `t`
/// from class `t - 1` and the conditioning of sample `t`. `classes` must
/// cover `mel` exactly.
pub fn forward_teacher_forced(
    classes: &[MuLawClass],
    mel: &MelSpectrogram,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<TeacherForcedPass> {
    check_exact(classes, mel, config)?;
    forward_teacher_forced_in_context(classes, mel, 0, params, config)
}

/// Like [`forward_teacher_forced`], but the conditioning network runs over
/// all of `mel` while `classes` start at frame `frame_offset`. Training
/// windows use this so their conditioning matches whole-utterance synthesis.
pub fn forward_teacher_forced_in_context(
    classes: &[MuLawClass],
    mel: &MelSpectrogram,
    frame_offset: usize,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<TeacherForcedPass> {
    check_alignment(classes, mel, frame_offset, config)?;
    let conditioning = conditioning_pass(mel, params, true);
    let cond_dim = config.cond_dim();
    let mut stepper = ArStepper::new(params, config);
    let n = classes.len();
    let mut logits = Vec::with_capacity(n - 1);
    let mut steps = Vec::with_capacity(n - 1);
    for t in 1..n {
        let f = frame_offset + t / config.hop;
        let cond = &conditioning.layer2.out[f * cond_dim..(f + 1) * cond_dim];
        let gru = stepper.step_cached(classes[t - 1], cond);
        logits.push(stepper.logits.clone());
        steps.push(ArRecord {
            gru,
            act: stepper.act.clone(),
        });
    }
    Ok(TeacherForcedPass {
        config: *config,
        frame_offset,
        targets: classes[1..].to_vec(),
        logits,
        conditioning,
        steps,
    })
}

/// Mean teacher-forced NLL without retaining activations.
pub fn teacher_forced_nll(
    classes: &[MuLawClass],
    mel: &MelSpectrogram,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<f64> {
    check_exact(classes, mel, config)?;
    check_alignment(classes, mel, 0, config)?;
    let features = conditioning_forward(mel, params, config)?;
    let mut stepper = ArStepper::new(params, config);
    let mut total = 0.0;
    for t in 1..classes.len() {
        stepper.step(classes[t - 1], features.frame(t / config.hop));
        total -= log_softmax(&stepper.logits)[classes[t].index()];
    }
    Ok(total / (classes.len() - 1) as f64)
}

/// Mean categorical negative log-likelihood in nats.
pub fn nll_loss(logits: &[Vec<f64>], targets: &[MuLawClass]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::Input("no predictions".into()));
    }
    let mut total = 0.0;
    for (row, target) in logits.iter().zip(targets) {
        let idx = target.index();
        if idx >= row.len() {
            return Err(Error::InputDomain(format!("target {idx} outside {} classes", row.len())));
        }
        total -= log_softmax(row)[idx];
    }
    Ok(total / logits.len() as f64)
}

/// Exact reverse-mode gradients of the mean NLL of `pass` for every tensor.
/// Returns `(loss, gradients)`.
pub fn backward(pass: &TeacherForcedPass, params: &ModelParams) -> (f64, ModelParams) {
    let cfg = &pass.config;
    let mut grads = ModelParams::zeros(cfg);
    let n_steps = pass.steps.len();
    let scale = 1.0 / n_steps as f64;
    let cond_dim = cfg.cond_dim();
    let n_frames = pass.conditioning.layer2.fwd.len();
    let mut dcond = vec![0.0; n_frames * cond_dim];

    let mut probs = Vec::with_capacity(cfg.n_classes);
    let mut loss = 0.0;
    let mut dh_next = vec![0.0; cfg.ar_hidden];
    let mut dh = vec![0.0; cfg.ar_hidden];
    let mut dact = vec![0.0; cfg.ar_hidden];
    let mut dx = vec![0.0; cfg.ar_input_dim()];

    for (k, step) in pass.steps.iter().enumerate().rev() {
        let target = pass.targets[k].index();
        softmax_into(&pass.logits[k], &mut probs);
        loss -= probs[target].ln();
        probs[target] -= 1.0;
        probs.iter_mut().for_each(|p| *p *= scale);

        // logits = B act + b
        outer_add(&mut grads.affine_b.w, cfg.ar_hidden, &probs, &step.act);
        for (g, p) in grads.affine_b.b.iter_mut().zip(&probs) {
            *g += p;
        }
        dact.fill(0.0);
        matvec_t_add(&params.affine_b.w, cfg.ar_hidden, &probs, &mut dact);
        for (d, a) in dact.iter_mut().zip(&step.act) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }

        // act = relu(A h + b)
        let h = &step_hidden(pass, k);
        outer_add(&mut grads.affine_a.w, cfg.ar_hidden, &dact, h);
        for (g, d) in grads.affine_a.b.iter_mut().zip(&dact) {
            *g += d;
        }
        dh.copy_from_slice(&dh_next);
        matvec_t_add(&params.affine_a.w, cfg.ar_hidden, &dact, &mut dh);

        dx.fill(0.0);
        params
            .ar_gru
            .backward(&step.gru, &dh, &mut grads.ar_gru, Some(&mut dx), &mut dh_next);

        // The upsampler repeats each frame `hop` times, so frame gradients sum.
        let f = pass.frame_offset + (k + 1) / cfg.hop;
        for (d, v) in dcond[f * cond_dim..(f + 1) * cond_dim].iter_mut().zip(&dx[1..]) {
            *d += v;
        }
    }

    let cp = &pass.conditioning;
    let dlayer1 = bi_layer_backward(
        &cp.layer2,
        &dcond,
        &params.cond_gru_2_fwd,
        &params.cond_gru_2_bwd,
        &mut grads.cond_gru_2_fwd,
        &mut grads.cond_gru_2_bwd,
        true,
    )
    .expect("input gradient requested");
    bi_layer_backward(
        &cp.layer1,
        &dlayer1,
        &params.cond_gru_1_fwd,
        &params.cond_gru_1_bwd,
        &mut grads.cond_gru_1_fwd,
        &mut grads.cond_gru_1_bwd,
        false,
    );
    (loss * scale, grads)
}

/// Hidden state produced by step `k`, i.e. the input hidden of step `k + 1`.
fn step_hidden(pass: &TeacherForcedPass, k: usize) -> Vec<f64> {
    let g = &pass.steps[k].gru;
    g.z.iter()
        .zip(&g.n)
        .zip(&g.h)
        .map(|((z, n), h)| (1.0 - z) * n + z * h)
        .collect()
}
