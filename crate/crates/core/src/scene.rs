//! Random scene sampling, metadata vectors, and the configuration
//! distance used to check train/test independence.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::rng::mix_seed;
use crate::room::{Room, Scene, MIC_HEIGHT, ROOM_HEIGHT, SOURCE_HEIGHT};

/// Wall a microphone is placed next to. Scenes list microphones in
/// [`WALL_ORDER`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    North,
    South,
    East,
    West,
}

pub const WALL_ORDER: [Wall; 4] = [Wall::North, Wall::South, Wall::East, Wall::West];

impl Wall {
    /// Distance from `p` to this wall of `room` (north is `y = length`,
    /// east is `x = width`).
    pub fn distance(self, room: &Room, p: Point2) -> f64 {
        match self {
            Wall::North => room.length - p.y,
            Wall::South => p.y,
            Wall::East => room.width - p.x,
            Wall::West => p.x,
        }
    }
}

/// Uniform room, microphone and source sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSampler {
    pub width: (f64, f64),
    pub length: (f64, f64),
    pub height: f64,
    /// Distance of each microphone line from its wall.
    pub mic_offset: f64,
    /// Minimum source distance from every wall.
    pub source_margin: f64,
    /// `None` samples anechoic rooms.
    pub rt60: Option<(f64, f64)>,
    pub snr_db: f64,
    pub mic_height: f64,
    pub source_height: f64,
}

impl SceneSampler {
    pub fn anechoic() -> Self {
        Self {
            width: (3.0, 6.0),
            length: (3.0, 6.0),
            height: ROOM_HEIGHT,
            mic_offset: 0.5,
            source_margin: 0.5,
            rt60: None,
            snr_db: 30.0,
            mic_height: MIC_HEIGHT,
            source_height: SOURCE_HEIGHT,
        }
    }

    pub fn reverberant() -> Self {
        Self { rt60: Some((0.3, 0.6)), ..Self::anechoic() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Scene {
        let width = rng.random_range(self.width.0..=self.width.1);
        let length = rng.random_range(self.length.0..=self.length.1);
        let rt60 = self.rt60.map_or(0.0, |(lo, hi)| rng.random_range(lo..=hi));
        let off = self.mic_offset;
        let along_x = |rng: &mut R| rng.random_range(off..=width - off);
        let along_y = |rng: &mut R| rng.random_range(off..=length - off);
        let north = Point2::new(along_x(rng), length - off);
        let south = Point2::new(along_x(rng), off);
        let east = Point2::new(width - off, along_y(rng));
        let west = Point2::new(off, along_y(rng));
        let m = self.source_margin;
        let source = Point2::new(rng.random_range(m..=width - m), rng.random_range(m..=length - m));
        Scene {
            room: Room { width, length, height: self.height, rt60 },
            mics: vec![north, south, east, west],
            source,
            mic_height: self.mic_height,
            source_height: self.source_height,
            snr_db: self.snr_db,
        }
    }
}

/// Room in `U[3,6]^2` m, one microphone 0.5 m from each wall, source at
/// least 0.5 m from every wall, no reverberation, 30 dB SNR.
pub fn sample_anechoic_scene<R: Rng + ?Sized>(rng: &mut R) -> Scene {
    SceneSampler::anechoic().sample(rng)
}

/// As [`sample_anechoic_scene`] with `rt60 ~ U[0.3, 0.6]` s.
pub fn sample_reverberant_scene<R: Rng + ?Sized>(rng: &mut R) -> Scene {
    SceneSampler::reverberant().sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 0x7472_6169_6e,
            Split::Val => 0x76_616c,
            Split::Test => 0x74_6573_74,
        }
    }
}

impl core::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Seed of one dataset sample, a hash of the master seed, split and index.
pub fn sample_seed(master: u64, split: Split, index: u64) -> u64 {
    mix_seed(&[master, split.tag(), index])
}

/// One metadata entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetadataField {
    MicX(usize),
    MicY(usize),
    Width,
    Length,
    Rt60,
}

impl MetadataField {
    /// Full field order for `mics` microphones:
    /// `m1x, m1y, ..., mMx, mMy, width, length, rt60`.
    pub fn layout(mics: usize) -> Vec<MetadataField> {
        let mut fields = Vec::with_capacity(2 * mics + 3);
        for i in 0..mics {
            fields.push(MetadataField::MicX(i));
            fields.push(MetadataField::MicY(i));
        }
        fields.extend([MetadataField::Width, MetadataField::Length, MetadataField::Rt60]);
        fields
    }

    pub fn is_mic(self) -> bool {
        matches!(self, MetadataField::MicX(_) | MetadataField::MicY(_))
    }

    pub fn is_room_dim(self) -> bool {
        matches!(self, MetadataField::Width | MetadataField::Length)
    }
}

/// Per-field inclusion flags over [`MetadataField::layout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataMask {
    include: Vec<bool>,
}

impl MetadataMask {
    pub fn full(mics: usize) -> Self {
        Self { include: vec![true; 2 * mics + 3] }
    }

    /// Mask selecting whole groups: microphone coordinates, room
    /// dimensions, reverberation time.
    pub fn groups(mics: usize, mic_coords: bool, room_dims: bool, rt60: bool) -> Self {
        let include = MetadataField::layout(mics)
            .into_iter()
            .map(|f| match f {
                MetadataField::MicX(_) | MetadataField::MicY(_) => mic_coords,
                MetadataField::Width | MetadataField::Length => room_dims,
                MetadataField::Rt60 => rt60,
            })
            .collect();
        Self { include }
    }

    pub fn from_flags(include: Vec<bool>) -> Result<Self> {
        if include.len() < 3 || !(include.len() - 3).is_multiple_of(2) {
            return Err(Error::Metadata(format!("{} flags do not match any layout", include.len())));
        }
        Ok(Self { include })
    }

    pub fn flags(&self) -> &[bool] {
        &self.include
    }

    pub fn num_mics(&self) -> usize {
        (self.include.len() - 3) / 2
    }

    /// Number of values the mask keeps.
    pub fn len(&self) -> usize {
        self.include.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn includes(&self, field: MetadataField) -> bool {
        MetadataField::layout(self.num_mics()).iter().position(|&f| f == field).is_some_and(|i| self.include[i])
    }

    pub fn fields(&self) -> Vec<MetadataField> {
        MetadataField::layout(self.num_mics()).into_iter().zip(&self.include).filter_map(|(f, &keep)| keep.then_some(f)).collect()
    }
}

/// Metadata in raw physical units (metres, seconds); masked fields are
/// omitted rather than zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct MetadataVector {
    pub values: Vec<f64>,
    pub fields: Vec<MetadataField>,
}

impl MetadataVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn field_value(scene: &Scene, field: MetadataField) -> f64 {
    match field {
        MetadataField::MicX(i) => scene.mics[i].x,
        MetadataField::MicY(i) => scene.mics[i].y,
        MetadataField::Width => scene.room.width,
        MetadataField::Length => scene.room.length,
        MetadataField::Rt60 => scene.room.rt60,
    }
}

pub fn build_metadata_vector(scene: &Scene, mask: &MetadataMask) -> Result<MetadataVector> {
    if mask.num_mics() != scene.mics.len() {
        return Err(Error::Metadata(format!("mask is for {} microphones, scene has {}", mask.num_mics(), scene.mics.len())));
    }
    let fields = mask.fields();
    let values = fields.iter().map(|&f| field_value(scene, f)).collect();
    Ok(MetadataVector { values, fields })
}

fn check_wall_order(scene: &Scene) -> Result<()> {
    if scene.mics.len() != WALL_ORDER.len() {
        return Err(Error::WallOrderMismatch(format!("{} microphones, expected 4", scene.mics.len())));
    }
    for (k, (&mic, &wall)) in scene.mics.iter().zip(&WALL_ORDER).enumerate() {
        let own = wall.distance(&scene.room, mic);
        let nearest = WALL_ORDER.iter().map(|w| w.distance(&scene.room, mic)).fold(f64::INFINITY, f64::min);
        if own > nearest + 1e-9 {
            return Err(Error::WallOrderMismatch(format!("microphone {k} is not nearest to the {wall:?} wall")));
        }
    }
    Ok(())
}

/// Sum of distances between wall-matched microphones of two scenes.
pub fn config_distance(a: &Scene, b: &Scene) -> Result<f64> {
    check_wall_order(a)?;
    check_wall_order(b)?;
    Ok(a.mics.iter().zip(&b.mics).map(|(p, q)| p.distance(*q)).sum())
}

/// Smallest [`config_distance`] from `sample` to any training scene.
pub fn min_config_distance(sample: &Scene, train: &[Scene]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    check_wall_order(sample)?;
    let mut best = f64::INFINITY;
    for other in train {
        check_wall_order(other)?;
        let d: f64 = sample.mics.iter().zip(&other.mics).map(|(p, q)| p.distance(*q)).sum();
        best = best.min(d);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn anechoic_bounds_hold() {
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let s = sample_anechoic_scene(&mut rng);
            assert!((3.0..=6.0).contains(&s.room.width) && (3.0..=6.0).contains(&s.room.length));
            for w in WALL_ORDER {
                assert!(w.distance(&s.room, s.source) >= 0.5);
            }
            assert_eq!(s.mics[0].y, s.room.length - 0.5);
            assert_eq!(s.mics[1].y, 0.5);
            assert_eq!(s.mics[2].x, s.room.width - 0.5);
            assert_eq!(s.mics[3].x, 0.5);
            assert_eq!(s.room.rt60, 0.0);
            assert_eq!(s.snr_db, 30.0);
            s.validate().unwrap();
        }
    }

    #[test]
    fn reverberant_rt60_range_and_mean() {
        let mut rng = rng_from_seed(2);
        let draws: Vec<f64> = (0..10_000).map(|_| sample_reverberant_scene(&mut rng).room.rt60).collect();
        assert!(draws.iter().all(|r| (0.3..=0.6).contains(r)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.45).abs() <= 0.01, "{mean}");
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(sample_anechoic_scene(&mut rng_from_seed(5)), sample_anechoic_scene(&mut rng_from_seed(5)));
        assert_eq!(sample_reverberant_scene(&mut rng_from_seed(5)), sample_reverberant_scene(&mut rng_from_seed(5)));
    }

    #[test]
    fn split_seeds_are_distinct() {
        let a = sample_seed(1, Split::Train, 0);
        assert_ne!(a, sample_seed(1, Split::Test, 0));
        assert_ne!(a, sample_seed(1, Split::Train, 1));
        assert_ne!(a, sample_seed(2, Split::Train, 0));
    }

    #[test]
    fn metadata_lengths() {
        let s = sample_reverberant_scene(&mut rng_from_seed(3));
        let full = build_metadata_vector(&s, &MetadataMask::full(4)).unwrap();
        assert_eq!(full.len(), 11);
        assert_eq!(full.values[0], s.mics[0].x);
        assert_eq!(full.values[8], s.room.width);
        assert_eq!(full.values[10], s.room.rt60);
        assert_eq!(build_metadata_vector(&s, &MetadataMask::groups(4, true, false, false)).unwrap().len(), 8);
        let rt = build_metadata_vector(&s, &MetadataMask::groups(4, false, false, true)).unwrap();
        assert_eq!(rt.values, vec![s.room.rt60]);
        assert!(build_metadata_vector(&s, &MetadataMask::full(3)).is_err());
    }

    #[test]
    fn config_distance_by_hand() {
        let s = sample_anechoic_scene(&mut rng_from_seed(4));
        assert_eq!(config_distance(&s, &s).unwrap(), 0.0);
        let mut shifted = s.clone();
        shifted.mics[0].x += 0.1;
        shifted.mics[1].x -= 0.1;
        shifted.mics[2].y += 0.1;
        shifted.mics[3].y -= 0.1;
        assert!((config_distance(&s, &shifted).unwrap() - 0.4).abs() < 1e-12);
        let mut one = s.clone();
        one.mics[0].x -= 0.3;
        one.mics[0].y -= 0.4;
        assert!((config_distance(&s, &one).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wall_order_is_checked() {
        let s = sample_anechoic_scene(&mut rng_from_seed(6));
        let mut swapped = s.clone();
        swapped.mics.swap(0, 1);
        assert!(matches!(config_distance(&s, &swapped), Err(Error::WallOrderMismatch(_))));
    }

    #[test]
    fn min_distance_cases() {
        let mut rng = rng_from_seed(8);
        let test = sample_anechoic_scene(&mut rng);
        let train: Vec<Scene> = (0..50).map(|_| sample_anechoic_scene(&mut rng)).collect();
        assert!(min_config_distance(&test, &train).unwrap() > 0.0);
        let mut with_dup = train.clone();
        with_dup.push(test.clone());
        assert_eq!(min_config_distance(&test, &with_dup).unwrap(), 0.0);
        assert_eq!(min_config_distance(&test, &train[..1]).unwrap(), config_distance(&test, &train[0]).unwrap());
        assert_eq!(min_config_distance(&test, &[]), Err(Error::Empty("training set")));
    }
}
