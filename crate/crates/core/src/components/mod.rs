//! Component library.

pub mod arrester;
pub mod cigre;
pub mod gap;
pub mod plant;
pub mod thevenin;
pub mod tower;

pub use arrester::{ArresterCharacteristic, ArresterRating};
pub use cigre::{cigre_waveform, LightningSpec, Polarity};
pub use gap::{gap_update, GapModel, GapParams, GapState};
pub use plant::{build_plant, PiSection, PlantSpec, TransformerData};
pub use thevenin::{thevenin_from_sc, ShortCircuit, TheveninInput, TheveninSpec};
pub use tower::{build_tower, Crossarm, TowerModel, TowerShape};
