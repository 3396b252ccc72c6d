//! Metadata perturbation and relevance masks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_from_seed};
use crate::scene::{MetadataField, MetadataMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbTarget {
    MicCoords,
    Rt60,
}

impl PerturbTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbTarget::MicCoords => "mic-coords",
            PerturbTarget::Rt60 => "rt60",
        }
    }

    pub fn matches(self, field: MetadataField) -> bool {
        match self {
            PerturbTarget::MicCoords => field.is_mic(),
            PerturbTarget::Rt60 => field == MetadataField::Rt60,
        }
    }
}

impl core::str::FromStr for PerturbTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mic-coords" => Ok(PerturbTarget::MicCoords),
            "rt60" => Ok(PerturbTarget::Rt60),
            _ => Err(Error::InvalidArgument(format!("unknown perturbation target {s:?}"))),
        }
    }
}

/// Gaussian noise of standard deviation `std` (metres or seconds) added
/// to the targeted metadata fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub target: PerturbTarget,
    pub std: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(target: PerturbTarget, std: f64, seed: u64) -> Result<Self> {
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::InvalidArgument(format!("perturbation std {std}")));
        }
        Ok(Self { target, std, seed })
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.target.as_str(), self.std)
    }
}

/// Adds noise to the targeted fields of every row of `metadata`, a
/// row-major `[n, fields.len()]` table. Sample `i` draws from its own
/// stream, so a row's noise does not depend on how many rows there are.
pub fn perturb_metadata(metadata: &mut [f32], fields: &[MetadataField], spec: &PerturbationSpec) -> Result<()> {
    let cols: Vec<usize> = fields.iter().enumerate().filter(|(_, f)| spec.target.matches(**f)).map(|(i, _)| i).collect();
    if cols.is_empty() {
        return Err(Error::Metadata(format!("perturbation targets {} but the mask excludes it", spec.target.as_str())));
    }
    if fields.is_empty() || !metadata.len().is_multiple_of(fields.len()) {
        return Err(Error::ShapeMismatch(format!("{} metadata values for {} fields", metadata.len(), fields.len())));
    }
    if spec.std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, spec.std).map_err(|e| Error::InvalidArgument(format!("{e}")))?;
    for (i, row) in metadata.chunks_mut(fields.len()).enumerate() {
        let mut rng = rng_from_seed(mix_seed(&[spec.seed, 0x7065_7274, i as u64]));
        for &c in &cols {
            row[c] = (row[c] as f64 + normal.sample(&mut rng)) as f32;
        }
    }
    Ok(())
}

/// Percentage increase of `perturbed` over `clean`.
pub fn relative_increase(clean: f64, perturbed: f64) -> f64 {
    (perturbed - clean) / clean * 100.0
}

/// Performance of a masked model relative to the full-metadata one, as
/// `error_full / error_mask × 100` (higher is better).
pub fn relevance_percent(error_full: f64, error_mask: f64) -> f64 {
    error_full / error_mask * 100.0
}

/// Inclusion of the three metadata groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelevanceMask {
    pub mic_coords: bool,
    pub room_dims: bool,
    pub rt60: bool,
}

impl RelevanceMask {
    pub const FULL: RelevanceMask = RelevanceMask { mic_coords: true, room_dims: true, rt60: true };

    /// The seven non-empty group combinations, full mask first.
    pub fn table() -> [RelevanceMask; 7] {
        let m = |mic_coords, room_dims, rt60| RelevanceMask { mic_coords, room_dims, rt60 };
        [
            m(true, true, true),
            m(true, true, false),
            m(true, false, true),
            m(false, true, true),
            m(true, false, false),
            m(false, true, false),
            m(false, false, true),
        ]
    }

    pub fn metadata_mask(self, mics: usize) -> MetadataMask {
        MetadataMask::groups(mics, self.mic_coords, self.room_dims, self.rt60)
    }

    /// Short name such as `mic+dims+rt60` or `rt60`.
    pub fn label(self) -> String {
        let parts: Vec<&str> = [(self.mic_coords, "mic"), (self.room_dims, "dims"), (self.rt60, "rt60")]
            .iter()
            .filter_map(|&(on, name)| on.then_some(name))
            .collect();
        if parts.is_empty() {
            String::from("none")
        } else {
            parts.join("+")
        }
    }

    pub fn is_empty(self) -> bool {
        !(self.mic_coords || self.room_dims || self.rt60)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_std_changes_nothing() {
        let fields = MetadataField::layout(4);
        let mut md: Vec<f32> = (0..22).map(|i| i as f32).collect();
        let before = md.clone();
        perturb_metadata(&mut md, &fields, &PerturbationSpec::new(PerturbTarget::MicCoords, 0.0, 1).unwrap()).unwrap();
        assert_eq!(md, before);
    }

    #[test]
    fn only_targeted_fields_move() {
        let fields = MetadataField::layout(4);
        let mut md = vec![1.0f32; 22];
        perturb_metadata(&mut md, &fields, &PerturbationSpec::new(PerturbTarget::Rt60, 0.2, 3).unwrap()).unwrap();
        for (i, v) in md.iter().enumerate() {
            assert_eq!(*v != 1.0, i % 11 == 10, "index {i}");
        }
    }

    #[test]
    fn perturbation_statistics() {
        let fields = MetadataField::layout(4);
        let n = 20_000;
        let mut md = vec![0.0f32; n * 11];
        perturb_metadata(&mut md, &fields, &PerturbationSpec::new(PerturbTarget::MicCoords, 0.1, 9).unwrap()).unwrap();
        let mic: Vec<f64> = md.chunks(11).flat_map(|r| r[..8].iter().map(|&v| v as f64)).collect();
        let mean = mic.iter().sum::<f64>() / mic.len() as f64;
        let var = mic.iter().map(|v| v * v).sum::<f64>() / mic.len() as f64;
        assert!(mean.abs() < 0.003);
        assert!((libm::sqrt(var) - 0.1).abs() < 0.002);
    }

    #[test]
    fn masked_target_is_rejected() {
        let fields = MetadataMask::groups(4, true, true, false).fields();
        let mut md = vec![0.0f32; 10];
        let spec = PerturbationSpec::new(PerturbTarget::Rt60, 0.2, 0).unwrap();
        assert!(matches!(perturb_metadata(&mut md, &fields, &spec), Err(Error::Metadata(_))));
        assert!(PerturbationSpec::new(PerturbTarget::Rt60, -1.0, 0).is_err());
    }

    #[test]
    fn relevance_table_shape() {
        let table = RelevanceMask::table();
        assert_eq!(table[0], RelevanceMask::FULL);
        let lens: Vec<usize> = table.iter().map(|m| m.metadata_mask(4).len()).collect();
        assert_eq!(lens, vec![11, 10, 9, 3, 8, 2, 1]);
        assert_eq!(table[6].label(), "rt60");
        assert_eq!(table[0].label(), "mic+dims+rt60");
        assert_eq!(relevance_percent(0.5, 0.5), 100.0);
        assert!((relative_increase(0.4, 0.5) - 25.0).abs() < 1e-12);
    }
}
