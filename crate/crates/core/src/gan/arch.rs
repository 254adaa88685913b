use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GeometryMode, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{
    Activation, BiLstm, Conv1d, Conv1dParams, ConvGeometry, Dense, Lstm, MinibatchDiscrimination, PoolGeometry,
};

pub const DEFAULT_HIDDEN: usize = 50;
pub const DEFAULT_MINIBATCH_KERNEL_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    /// Stacked LSTM with a per-timestep dense `hidden -> 1` head.
    Lstm,
    /// Stacked BiLSTM; the summed final states feed a dense `hidden -> T` head.
    Bilstm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub layers: usize,
    pub hidden: usize,
    pub length: usize,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, length: usize) -> Self {
        GeneratorSpec {
            kind,
            layers: 2,
            hidden: DEFAULT_HIDDEN,
            length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::config("generator.layers", "must be at least 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("generator.hidden", "must be at least 1"));
        }
        if self.length == 0 {
            return Err(Error::config("generator.length", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminatorKind {
    Lstm,
    Cnn,
}

/// One convolution → ReLU → max-pool block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvPoolStage {
    pub conv: ConvGeometry,
    pub pool: PoolGeometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorSpec {
    pub kind: DiscriminatorKind,
    pub input_length: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub conv_stack: Vec<ConvPoolStage>,
    /// Number of minibatch-discrimination outputs `B`; 0 disables the layer.
    #[serde(default)]
    pub minibatch_outputs: usize,
    #[serde(default = "default_kernel_dim")]
    pub minibatch_kernel_dim: usize,
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

fn default_kernel_dim() -> usize {
    DEFAULT_MINIBATCH_KERNEL_DIM
}

impl DiscriminatorSpec {
    pub fn lstm(input_length: usize) -> Self {
        DiscriminatorSpec {
            kind: DiscriminatorKind::Lstm,
            input_length,
            hidden: DEFAULT_HIDDEN,
            conv_stack: Vec::new(),
            minibatch_outputs: 0,
            minibatch_kernel_dim: DEFAULT_MINIBATCH_KERNEL_DIM,
        }
    }

    pub fn cnn(input_length: usize, conv_stack: Vec<ConvPoolStage>) -> Self {
        DiscriminatorSpec {
            kind: DiscriminatorKind::Cnn,
            input_length,
            hidden: DEFAULT_HIDDEN,
            conv_stack,
            minibatch_outputs: 0,
            minibatch_kernel_dim: DEFAULT_MINIBATCH_KERNEL_DIM,
        }
    }

    pub fn with_minibatch(mut self, outputs: usize) -> Self {
        self.minibatch_outputs = outputs;
        self
    }

    /// Channel/length trace through the convolution stack, one entry per
    /// layer, starting with the raw `1 x input_length` input.
    pub fn shape_trace(&self) -> Result<Vec<LayerShape>> {
        let mut trace = vec![LayerShape {
            label: "input".into(),
            channels: 1,
            length: self.input_length,
        }];
        let mut len = self.input_length;
        for (i, stage) in self.conv_stack.iter().enumerate() {
            let c = stage.conv;
            if c.kernel % 2 == 0 {
                return Err(Error::Geometry {
                    width: len,
                    kernel: c.kernel,
                    stride: c.stride,
                    padding: c.padding,
                    reason: "kernel must be odd",
                });
            }
            len = crate::autodiff::window_output_len(len, c.kernel, c.stride, c.padding, c.mode)?;
            let ch = c.maps;
            trace.push(LayerShape {
                label: format!("C{}", i + 1),
                channels: ch,
                length: len,
            });
            len = stage.pool.output_len(len)?;
            trace.push(LayerShape {
                label: format!("P{}", i + 1),
                channels: ch,
                length: len,
            });
        }
        Ok(trace)
    }

    /// Width of the feature vector entering the minibatch layer.
    pub fn feature_size(&self) -> Result<usize> {
        match self.kind {
            DiscriminatorKind::Lstm => Ok(self.hidden),
            DiscriminatorKind::Cnn => {
                let last = self.shape_trace()?.pop().unwrap();
                Ok(last.channels * last.length)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 {
            return Err(Error::config("discriminator.input_length", "must be at least 1"));
        }
        if self.kind == DiscriminatorKind::Cnn && self.conv_stack.is_empty() {
            return Err(Error::config("discriminator.conv_stack", "cnn discriminator needs at least one stage"));
        }
        if self.minibatch_outputs > 0 && self.minibatch_kernel_dim == 0 {
            return Err(Error::config("discriminator.minibatch_kernel_dim", "must be at least 1"));
        }
        self.feature_size().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub label: String,
    pub channels: usize,
    pub length: usize,
}

impl std::fmt::Display for LayerShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}*{}", self.channels, self.length)
    }
}

fn stage(maps: usize, kernel: usize, stride: usize, padding: usize, mode: GeometryMode, pool: PoolGeometry) -> ConvPoolStage {
    ConvPoolStage {
        conv: ConvGeometry {
            maps,
            kernel,
            stride,
            padding,
            mode,
        },
        pool,
    }
}

fn pool(window: usize, stride: usize, padding: usize) -> PoolGeometry {
    PoolGeometry {
        window,
        stride,
        padding,
    }
}

/// Convolution-pooling stack for length-40 sine waves.
///
/// `1*40 → C1 10*38 → P1 10*18 → C2 5*16 → P2 5*7`.
pub fn sine_conv_stack(stages: usize) -> Vec<ConvPoolStage> {
    let all = [
        stage(10, 3, 1, 0, GeometryMode::Exact, pool(3, 2, 0)),
        stage(5, 3, 1, 0, GeometryMode::Exact, pool(3, 2, 0)),
    ];
    all[..stages.min(2)].to_vec()
}

/// Four-stage stack for length-187 ECG series.
///
/// The published table is internally inconsistent; this stack reproduces
/// every output size it lists:
/// `1*187 → 3*185 → 3*185 → 5*181 → 5*90 → 8*44 → 8*21 → 12*8 → 12*2`.
/// See [`ECG_STACK_CORRECTIONS`] for the entries that had to change.
pub fn ecg_conv_stack() -> Vec<ConvPoolStage> {
    vec![
        stage(3, 3, 1, 0, GeometryMode::Exact, pool(3, 1, 1)),
        stage(5, 5, 1, 0, GeometryMode::Exact, pool(3, 2, 0)),
        stage(8, 3, 2, 0, GeometryMode::Floor, pool(3, 2, 0)),
        stage(12, 7, 2, 0, GeometryMode::Exact, pool(5, 2, 0)),
    ]
}

/// Entries of the published 4-stage table that disagree with its own
/// arithmetic, and how [`ecg_conv_stack`] resolves them.
pub const ECG_STACK_CORRECTIONS: &[&str] = &[
    "P1: window 3, stride 1 keeps 185 samples only with 1 sample of pooling padding",
    "C2: listed filter 3 gives 183, not the listed 181; kernel 5 used",
    "C3: (90 - 3)/2 + 1 is fractional; floor mode gives the listed 44",
    "P3: input listed as 10*44 after C3 outputs 8*44; 8 channels used",
    "C4: input listed as 10*21 after P3 outputs 8*21; 8 channels used",
    "C4: listed filter 5 gives 9, not the listed 8; kernel 7 used",
    "P4: input listed as 5*8 after C4 outputs 12*8; 12 channels used",
];

/// Human-readable trace of a discriminator's convolution stack, with the
/// table corrections appended when the stack is the ECG one.
pub fn shape_report(spec: &DiscriminatorSpec) -> Result<String> {
    let trace = spec.shape_trace()?;
    let mut out = String::new();
    for s in &trace {
        out.push_str(&format!("{:<6} {}\n", s.label, s));
    }
    out.push_str(&format!("features {}\n", spec.feature_size()?));
    if spec.conv_stack == ecg_conv_stack() {
        out.push_str("corrections:\n");
        for c in ECG_STACK_CORRECTIONS {
            out.push_str(&format!("  - {c}\n"));
        }
    }
    Ok(out)
}

/// The seven generator/discriminator pairings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "lstm-gan")]
    LstmGan,
    #[serde(rename = "1cnn-gan")]
    OneCnnGan,
    #[serde(rename = "2cnn-gan")]
    TwoCnnGan,
    #[serde(rename = "1cnn-bilstm-gan")]
    OneCnnBilstmGan,
    #[serde(rename = "2cnn-bilstm-gan")]
    TwoCnnBilstmGan,
    #[serde(rename = "4cnn-gan")]
    FourCnnGan,
    #[serde(rename = "4cnn-bilstm-gan")]
    FourCnnBilstmGan,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::LstmGan,
        Preset::OneCnnGan,
        Preset::TwoCnnGan,
        Preset::OneCnnBilstmGan,
        Preset::TwoCnnBilstmGan,
        Preset::FourCnnGan,
        Preset::FourCnnBilstmGan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::LstmGan => "lstm-gan",
            Preset::OneCnnGan => "1cnn-gan",
            Preset::TwoCnnGan => "2cnn-gan",
            Preset::OneCnnBilstmGan => "1cnn-bilstm-gan",
            Preset::TwoCnnBilstmGan => "2cnn-bilstm-gan",
            Preset::FourCnnGan => "4cnn-gan",
            Preset::FourCnnBilstmGan => "4cnn-bilstm-gan",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn is_ecg(self) -> bool {
        matches!(self, Preset::FourCnnGan | Preset::FourCnnBilstmGan)
    }

    /// Series length the preset was designed for.
    pub fn series_length(self) -> usize {
        if self.is_ecg() {
            187
        } else {
            40
        }
    }

    pub fn spec(self, minibatch_outputs: usize) -> GanSpec {
        let t = self.series_length();
        let gen_kind = match self {
            Preset::OneCnnBilstmGan | Preset::TwoCnnBilstmGan | Preset::FourCnnBilstmGan => GeneratorKind::Bilstm,
            _ => GeneratorKind::Lstm,
        };
        let disc = match self {
            Preset::LstmGan => DiscriminatorSpec::lstm(t),
            Preset::OneCnnGan | Preset::OneCnnBilstmGan => DiscriminatorSpec::cnn(t, sine_conv_stack(1)),
            Preset::TwoCnnGan | Preset::TwoCnnBilstmGan => DiscriminatorSpec::cnn(t, sine_conv_stack(2)),
            Preset::FourCnnGan | Preset::FourCnnBilstmGan => DiscriminatorSpec::cnn(t, ecg_conv_stack()),
        };
        GanSpec {
            generator: GeneratorSpec::new(gen_kind, t),
            discriminator: disc.with_minibatch(minibatch_outputs),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanSpec {
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
}

impl GanSpec {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.generator.length != self.discriminator.input_length {
            return Err(Error::config(
                "discriminator.input_length",
                format!("must equal generator.length ({})", self.generator.length),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum GenBody {
    Lstm(Vec<Lstm>),
    Bilstm(Vec<BiLstm>),
}

/// Maps `m x T` noise to `m x T` series.
#[derive(Clone, Debug)]
pub struct Generator {
    pub spec: GeneratorSpec,
    pub store: ParamStore,
    body: GenBody,
    head: Dense,
}

/// Splits an `m x T` matrix into `T` column vars of shape `[m, 1]`.
fn time_steps(g: &mut Graph, x: Var) -> Result<Vec<Var>> {
    let t = g.shape(x)[1];
    (0..t).map(|i| g.slice(x, 1, i, 1)).collect()
}

impl Generator {
    pub fn new(spec: GeneratorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut store = ParamStore::new();
        let h = spec.hidden;
        let (body, head) = match spec.kind {
            GeneratorKind::Lstm => {
                let cells = (0..spec.layers)
                    .map(|l| Lstm::new(&mut store, &format!("gen.lstm{l}"), if l == 0 { 1 } else { h }, h, &mut rng))
                    .collect();
                let head = Dense::new(&mut store, "gen.head", h, 1, Activation::None, &mut rng);
                (GenBody::Lstm(cells), head)
            }
            GeneratorKind::Bilstm => {
                let cells = (0..spec.layers)
                    .map(|l| {
                        BiLstm::init(&mut store, &format!("gen.bilstm{l}"), if l == 0 { 1 } else { h }, h, &mut rng)
                    })
                    .collect();
                let head = Dense::new(&mut store, "gen.head", h, spec.length, Activation::None, &mut rng);
                (GenBody::Bilstm(cells), head)
            }
        };
        Ok(Generator {
            spec,
            store,
            body,
            head,
        })
    }

    /// Builds the generator on noise `z` of shape `[m, T]`.
    pub fn forward(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let zs = g.shape(z).to_vec();
        if zs.len() != 2 || zs[1] != self.spec.length {
            return Err(Error::ShapeMismatch {
                op: "generate",
                lhs: vec![zs[0], self.spec.length],
                rhs: zs,
            });
        }
        let (m, t) = (zs[0], zs[1]);
        let mut xs = time_steps(g, z)?;
        match &self.body {
            GenBody::Lstm(cells) => {
                for cell in cells {
                    xs = cell.sequence(g, &self.store, &xs)?.0;
                }
                let h = self.spec.hidden;
                let wide = g.concat(&xs, 1)?;
                let tall = g.reshape(wide, &[m * t, h])?;
                let y = self.head.forward(g, &self.store, tall)?;
                g.reshape(y, &[m, t])
            }
            GenBody::Bilstm(cells) => {
                let (last, inner) = cells.split_last().unwrap();
                for cell in inner {
                    xs = cell.sequence(g, &self.store, &xs)?;
                }
                let state = last.final_state_only(g, &self.store, &xs)?;
                self.head.forward(g, &self.store, state)
            }
        }
    }

    /// Evaluates the generator without tracking gradients.
    pub fn generate(&self, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let y = self.forward(&mut g, zv)?;
        Ok(g.value(y).clone())
    }

    pub fn body_cells(&self) -> Vec<(&Lstm, Option<&Lstm>)> {
        match &self.body {
            GenBody::Lstm(c) => c.iter().map(|l| (l, None)).collect(),
            GenBody::Bilstm(c) => c.iter().map(|b| (&b.forward, Some(&b.backward))).collect(),
        }
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }
}

#[derive(Clone, Debug)]
enum DiscBody {
    Lstm(Vec<Lstm>),
    Cnn(Vec<(Conv1d, PoolGeometry)>),
}

/// Maps `m x T` series to `m x 1` probabilities of being real.
#[derive(Clone, Debug)]
pub struct Discriminator {
    pub spec: DiscriminatorSpec,
    pub store: ParamStore,
    body: DiscBody,
    minibatch: Option<MinibatchDiscrimination>,
    head: Dense,
}

impl Discriminator {
    pub fn new(spec: DiscriminatorSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut store = ParamStore::new();
        let body = match spec.kind {
            DiscriminatorKind::Lstm => DiscBody::Lstm(
                (0..2)
                    .map(|l| {
                        let input = if l == 0 { 1 } else { spec.hidden };
                        Lstm::new(&mut store, &format!("disc.lstm{l}"), input, spec.hidden, &mut rng)
                    })
                    .collect(),
            ),
            DiscriminatorKind::Cnn => {
                let mut channels = 1;
                let mut stages = Vec::new();
                for (i, st) in spec.conv_stack.iter().enumerate() {
                    let p = Conv1dParams::init(&st.conv, channels, &mut rng)?;
                    stages.push((p.register(&mut store, &format!("disc.conv{}", i + 1)), st.pool));
                    channels = st.conv.maps;
                }
                DiscBody::Cnn(stages)
            }
        };
        let features = spec.feature_size()?;
        let minibatch = (spec.minibatch_outputs > 0).then(|| {
            MinibatchDiscrimination::new(
                &mut store,
                "disc.minibatch",
                features,
                spec.minibatch_outputs,
                spec.minibatch_kernel_dim,
                &mut rng,
            )
        });
        let head = Dense::new(
            &mut store,
            "disc.head",
            features + spec.minibatch_outputs,
            1,
            Activation::Sigmoid,
            &mut rng,
        );
        Ok(Discriminator {
            spec,
            store,
            body,
            minibatch,
            head,
        })
    }

    /// Feature matrix `[m, A]` that enters the minibatch layer.
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let xs = g.shape(x).to_vec();
        if xs.len() != 2 || xs[1] != self.spec.input_length {
            return Err(Error::ShapeMismatch {
                op: "discriminate",
                lhs: vec![xs[0], self.spec.input_length],
                rhs: xs,
            });
        }
        let m = xs[0];
        match &self.body {
            DiscBody::Lstm(cells) => {
                let mut steps = time_steps(g, x)?;
                for cell in cells {
                    steps = cell.sequence(g, &self.store, &steps)?.0;
                }
                Ok(*steps.last().unwrap())
            }
            DiscBody::Cnn(stages) => {
                let mut h = g.reshape(x, &[m, 1, xs[1]])?;
                for (conv, pool) in stages {
                    h = conv.forward(g, &self.store, h)?;
                    h = g.relu(h)?;
                    h = g.maxpool1d(h, pool.window, pool.stride, pool.padding)?;
                }
                let s = g.shape(h).to_vec();
                g.reshape(h, &[m, s[1] * s[2]])
            }
        }
    }

    /// Probabilities `[m, 1]`. With minibatch discrimination enabled the
    /// output for each row depends on the whole batch.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut f = self.features(g, x)?;
        if let Some(mb) = &self.minibatch {
            f = mb.forward(g, &self.store, f)?;
        }
        self.head.forward(g, &self.store, f)
    }

    pub fn discriminate(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let p = self.forward(&mut g, xv)?;
        Ok(g.value(p).data().to_vec())
    }

    /// Shapes realised by an actual forward pass on a batch of one,
    /// `(channels, length)` after each conv and pool layer.
    pub fn realised_trace(&self) -> Result<Vec<(usize, usize)>> {
        let DiscBody::Cnn(stages) = &self.body else {
            return Ok(Vec::new());
        };
        let mut g = Graph::new();
        let mut h = g.constant(Tensor::zeros(&[1, 1, self.spec.input_length]));
        let mut out = Vec::new();
        for (conv, pool) in stages {
            h = conv.forward(&mut g, &self.store, h)?;
            out.push((g.shape(h)[1], g.shape(h)[2]));
            h = g.relu(h)?;
            h = g.maxpool1d(h, pool.window, pool.stride, pool.padding)?;
            out.push((g.shape(h)[1], g.shape(h)[2]));
        }
        Ok(out)
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }
}

/// A generator/discriminator pair.
#[derive(Clone, Debug)]
pub struct Gan {
    pub spec: GanSpec,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

impl Gan {
    pub fn new(spec: GanSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(Gan {
            generator: Generator::new(spec.generator.clone(), seed)?,
            discriminator: Discriminator::new(spec.discriminator.clone(), seed)?,
            spec,
        })
    }
}
