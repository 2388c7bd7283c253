//! Normalization plus learner, trained end to end on a [`Dataset`], and the
//! JSON model file format.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{encode_labels, fit_normalization, Dataset, FeatureSet, FeatureVector, GasSample, LabelScheme, NormalizationParams};
use crate::logistic::{fit_logistic, LogisticModel, LogisticSettings};
use crate::svm::{fit_svm, Kernel, PenaltyConfig, SmoSettings, SvmModel};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: Kernel,
    pub penalties: PenaltyConfig,
    #[serde(default)]
    pub smo: SmoSettings,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: Kernel::default_rbf(FeatureSet::default().len()),
            penalties: PenaltyConfig::default(),
            smo: SmoSettings::default(),
        }
    }
}

/// Learner choice with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum LearnerConfig {
    Svm(SvmConfig),
    Logistic(LogisticSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedSvm {
    pub normalization: NormalizationParams,
    #[serde(flatten)]
    pub svm: SvmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLogistic {
    pub normalization: NormalizationParams,
    #[serde(flatten)]
    pub model: LogisticModel,
}

impl FittedLogistic {
    pub fn features(&self, sample: &GasSample) -> Result<FeatureVector> {
        Ok(self.normalization.apply(sample)?)
    }

    pub fn log_odds(&self, sample: &GasSample) -> Result<f64> {
        Ok(self.model.log_odds(&self.features(sample)?)?)
    }

    pub fn probability(&self, sample: &GasSample) -> Result<f64> {
        Ok(self.model.predict_proba(&self.features(sample)?)?)
    }
}

/// A trained classifier as stored on disk, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Classifier {
    #[serde(rename = "svm")]
    Svm(FittedSvm),
    #[serde(rename = "logistic")]
    Logistic(FittedLogistic),
}

/// Fits normalization on `data`, then the learner on the normalized rows.
pub fn train(data: &Dataset, features: &FeatureSet, learner: &LearnerConfig) -> Result<Classifier> {
    data.require_both_classes()?;
    let normalization = fit_normalization(data, features)?;
    let x = normalization.apply_all(data)?;
    match learner {
        LearnerConfig::Svm(cfg) => {
            let y = encode_labels(data, LabelScheme::PlusMinusOne);
            let svm = fit_svm(&x, &y, cfg.kernel, cfg.penalties, &cfg.smo)?;
            Ok(Classifier::Svm(FittedSvm { normalization, svm }))
        }
        LearnerConfig::Logistic(settings) => {
            let y = encode_labels(data, LabelScheme::ZeroOne);
            let model = fit_logistic(&x, &y, settings)?;
            Ok(Classifier::Logistic(FittedLogistic { normalization, model }))
        }
    }
}

impl Classifier {
    pub fn normalization(&self) -> &NormalizationParams {
        match self {
            Classifier::Svm(m) => &m.normalization,
            Classifier::Logistic(m) => &m.normalization,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Svm(_) => "svm",
            Classifier::Logistic(_) => "logistic",
        }
    }

    /// Label in the learner's own scheme: `1/-1` for SVM, `1/0` for LR.
    pub fn predict_label(&self, x: &FeatureVector) -> Result<i8> {
        Ok(match self {
            Classifier::Svm(m) => m.svm.predict(x)?,
            Classifier::Logistic(m) => m.model.predict(x)?,
        })
    }

    pub fn predict_exploded(&self, sample: &GasSample) -> Result<bool> {
        let x = self.normalization().apply(sample)?;
        Ok(self.predict_label(&x)? == 1)
    }

    /// Explosion probability; `None` for the SVM.
    pub fn probability(&self, x: &FeatureVector) -> Result<Option<f64>> {
        match self {
            Classifier::Svm(_) => Ok(None),
            Classifier::Logistic(m) => Ok(Some(m.model.predict_proba(x)?)),
        }
    }

    pub fn converged(&self) -> bool {
        match self {
            Classifier::Svm(m) => m.svm.converged,
            Classifier::Logistic(m) => m.model.converged,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Classifier = serde_json::from_str(text)?;
        if let Classifier::Svm(m) = &model {
            m.svm.validate()?;
        }
        Ok(model)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_json()?.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }
}
