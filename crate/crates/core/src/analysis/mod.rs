//! Spectral and time-frequency analysis of probe waveforms.

pub mod emd;
pub mod hilbert;
pub mod spectrum;

pub use emd::{emd, Emd, EmdOptions, Imf};
pub use hilbert::{analytic_signal, hilbert_marginal, MarginalOptions, MarginalSpectrum};
pub use spectrum::{fft_magnitude, fft_magnitude_with, filter_characterize, FilterResponse, Spectrum, Window};
