//! Composition of the trained mapper with a rendering backend:
//! parameters -> predicted mel -> linear magnitudes -> Griffin-Lim audio,
//! with the per-frame gain correction applied last.

use crate::audio::Waveform;
use crate::error::Result;
use crate::mapper::MapperModel;
use crate::params::{AnalysisConfig, ContinuousParam, SpeechParams};
use crate::spectral::{mel_filterbank, MelBasis, MelSpectrogram};
use crate::vocoder::{griffin_lim, match_energy, GriffinLimConfig, MelInverter};

/// The built-in desk-scale synthesis chain. The NFMEL1 export is the seam
/// where an external neural vocoder replaces Griffin-Lim.
pub struct DeskPipeline {
    pub model: MapperModel,
    pub gl: GriffinLimConfig,
    /// Post-correct the rendered signal's gain to the parameter track's
    /// energy trajectory.
    pub apply_energy_match: bool,
    basis: MelBasis,
    inverter: MelInverter,
}

impl DeskPipeline {
    pub fn new(model: MapperModel, config: &AnalysisConfig, gl: GriffinLimConfig) -> Result<Self> {
        gl.validate()?;
        let basis = mel_filterbank(
            config.win_length,
            config.n_mels,
            config.mel_f_min,
            config.mel_f_max,
            config.sample_rate,
        )?;
        let inverter = MelInverter::new(&basis)?;
        Ok(DeskPipeline {
            model,
            gl,
            apply_energy_match: true,
            basis,
            inverter,
        })
    }

    pub fn basis(&self) -> &MelBasis {
        &self.basis
    }

    /// Mapper half only: z-score with the model's stored statistics,
    /// run the network, de-normalize.
    pub fn predict_mel(&self, params: &SpeechParams) -> Result<MelSpectrogram> {
        self.model.predict_mel(params)
    }

    /// Full render to audio.
    pub fn render(&self, params: &SpeechParams) -> Result<Waveform> {
        let mel = self.predict_mel(params)?;
        let magnitude = self.inverter.invert(&mel);
        let wave = griffin_lim(&magnitude, &self.gl)?;
        if self.apply_energy_match {
            Ok(match_energy(
                &wave,
                params.column(ContinuousParam::Energy),
                &params.grid,
            ))
        } else {
            Ok(wave)
        }
    }
}
