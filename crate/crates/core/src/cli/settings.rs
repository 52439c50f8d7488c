//! Resolved run settings: flags override the config file, which overrides
//! the defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::block_motion::SearchParams;
use crate::error::{Error, Result};
use crate::features::{ExtractorConfig, ExtractorKind, HeadFitOptions};
use crate::fusion::FusionOperator;
use crate::pipeline::{BackwardMode, ScheduleConfig, Scheme};

/// Every knob that affects a run's output. Recorded in each manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub scheme: Scheme,
    pub interval: usize,
    pub fusion: FusionOperator,
    pub extractor: ExtractorKind,
    pub backward: BackwardMode,
    pub include_ingest_time: bool,
    pub seed: u64,
    pub block_size: usize,
    pub radius: usize,
    pub noise_sigma: f32,
    pub backbone_layers: usize,
    pub handcraft_channels: usize,
    pub head_lambda: f64,
    pub fusion_lambda: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let ex = ExtractorConfig::default();
        let search = SearchParams::default();
        Settings {
            scheme: Scheme::Baseline,
            interval: 1,
            fusion: FusionOperator::Avg,
            extractor: ex.kind,
            backward: BackwardMode::Estimate,
            include_ingest_time: false,
            seed: 0,
            block_size: search.block_size,
            radius: search.radius,
            noise_sigma: ex.noise_sigma,
            backbone_layers: ex.backbone_layers,
            handcraft_channels: ex.handcraft_channels,
            head_lambda: HeadFitOptions::new(1).lambda,
            fusion_lambda: 1e-2,
        }
    }
}

/// Partial settings as read from a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialSettings {
    pub scheme: Option<Scheme>,
    pub interval: Option<usize>,
    pub fusion: Option<FusionOperator>,
    pub extractor: Option<ExtractorKind>,
    pub backward: Option<BackwardMode>,
    pub include_ingest_time: Option<bool>,
    pub seed: Option<u64>,
    pub block_size: Option<usize>,
    pub radius: Option<usize>,
    pub noise_sigma: Option<f32>,
    pub backbone_layers: Option<usize>,
    pub handcraft_channels: Option<usize>,
    pub head_lambda: Option<f64>,
    pub fusion_lambda: Option<f64>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($field:ident),*) => {
        $( if let Some(v) = $src.$field { $dst.$field = v; } )*
    };
}

impl PartialSettings {
    /// Reads a JSON config. A run manifest also works: its `settings`
    /// object is used.
    pub fn load(path: &Path) -> Result<PartialSettings> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if let Some(inner) = value.get_mut("settings") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| Error::format(path, e.to_string()))
    }

    fn apply(&self, s: &mut Settings) {
        overlay!(
            s,
            self,
            scheme,
            interval,
            fusion,
            extractor,
            backward,
            include_ingest_time,
            seed,
            block_size,
            radius,
            noise_sigma,
            backbone_layers,
            handcraft_channels,
            head_lambda,
            fusion_lambda
        );
    }
}

/// Flags shared by `run`, `eval` and `bench`.
#[derive(Args, Clone, Debug, Default)]
pub struct SettingsArgs {
    /// JSON settings file (or a run manifest to replay).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionOperator>,
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorKind>,
    /// How interpolation gets frame i -> i+1 motion.
    #[arg(long, value_enum, alias = "approx-backward")]
    pub backward: Option<BackwardMode>,
    /// Count motion sidecar reads toward inference time.
    #[arg(long)]
    pub include_ingest_time: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f32>,
    #[arg(long)]
    pub backbone_layers: Option<usize>,
    #[arg(long)]
    pub handcraft_channels: Option<usize>,
    #[arg(long)]
    pub head_lambda: Option<f64>,
    #[arg(long)]
    pub fusion_lambda: Option<f64>,
}

impl SettingsArgs {
    fn as_partial(&self, scheme: Option<Scheme>, interval: Option<usize>) -> PartialSettings {
        PartialSettings {
            scheme,
            interval,
            fusion: self.fusion,
            extractor: self.extractor,
            backward: self.backward,
            include_ingest_time: self.include_ingest_time.then_some(true),
            seed: self.seed,
            block_size: self.block_size,
            radius: self.radius,
            noise_sigma: self.noise_sigma,
            backbone_layers: self.backbone_layers,
            handcraft_channels: self.handcraft_channels,
            head_lambda: self.head_lambda,
            fusion_lambda: self.fusion_lambda,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self, scheme: Option<Scheme>, interval: Option<usize>) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &self.config {
            PartialSettings::load(path)?.apply(&mut s);
        }
        self.as_partial(scheme, interval).apply(&mut s);
        s.validate()?;
        Ok(s)
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 {
            return Err(Error::InvalidArgument(
                "--interval must be at least 1".into(),
            ));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidArgument(
                "--block-size must be positive".into(),
            ));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(
                "--noise-sigma must be nonnegative".into(),
            ));
        }
        if self.extractor == ExtractorKind::Handcraft && self.handcraft_channels < 6 {
            return Err(Error::InvalidArgument(
                "--handcraft-channels must be at least 6".into(),
            ));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.head_lambda) || !positive(self.fusion_lambda) {
            return Err(Error::InvalidArgument(
                "ridge penalties must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn search(&self) -> SearchParams {
        SearchParams {
            block_size: self.block_size,
            radius: self.radius,
            ..Default::default()
        }
    }

    pub fn extractor_config(&self, num_classes: usize) -> ExtractorConfig {
        ExtractorConfig {
            kind: self.extractor,
            num_classes,
            handcraft_channels: self.handcraft_channels,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            backbone_layers: self.backbone_layers,
            ..Default::default()
        }
    }

    pub fn head_options(&self, num_classes: usize) -> HeadFitOptions {
        HeadFitOptions {
            lambda: self.head_lambda,
            seed: self.seed,
            ..HeadFitOptions::new(num_classes)
        }
    }

    /// Schedule without conv weights; the caller fits those.
    pub fn schedule(&self, num_classes: usize) -> ScheduleConfig {
        let mut cfg = ScheduleConfig::new(
            self.scheme,
            self.interval,
            self.extractor_config(num_classes),
        );
        cfg.backward = self.backward;
        cfg.fusion.operator = self.fusion;
        cfg.include_ingest = self.include_ingest_time;
        cfg
    }
}
