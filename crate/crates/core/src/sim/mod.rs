//! Wheel-passage signal synthesis.
//!
//! Defect geometry (flats, polygonization) follows the closed-form wheel
//! profiles; the vehicle/track response is an analytic surrogate documented
//! on [`SurrogateParams`].

mod benchmark;
mod domain;
mod passage;
mod track;
mod wheel;

pub use benchmark::{
    build_benchmark, build_domain, class_counts, passage_seed, track_seed, Dataset, DomainData, Split,
};
pub use domain::{
    BenchmarkConfig, ClassLabel, ClassMix, DomainSpec, LoadMix, LoadScheme, Season, TrainType,
    TrainTypeMix,
};
pub use passage::{
    Channel, Defect, DefectLocation, PassageConditions, PassageRecord, PassageSynth, RailSide,
    SurrogateParams, TimeSeries,
};
pub use track::{
    gen_track_irregularity, TrackBank, TrackComponent, TrackIrregularityProfile, TRACK_LENGTH_M,
    TRACK_POINTS, TRACK_SPACING_M,
};
pub use wheel::{
    flat_depth, flat_profile, harmonic_amplitude, harmonic_wavelength, polygon_profile,
    FlatDefect, FlatSeverity, PolygonDefect, WheelGeometry, HARMONICS,
};
