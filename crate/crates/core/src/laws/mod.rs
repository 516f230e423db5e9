//! Scaling-law arithmetic: power-law and IsoFLOP fits, the stacking
//! guideline equations, speedup between loss curves and loss-gap fits.

mod fit;
mod guideline;
mod speedup;

pub use fit::{fit_isoflop, fit_loss_gap, fit_power_law, predict_loss, IsoFlopFit, LossGapFit, PowerLawFit};
pub use guideline::{guideline_d, guideline_g, Budget, GrowthGuideline, GuidelineCoeffs, STACKING_D, STACKING_G};
pub use speedup::{crossing_flops, speedup};
