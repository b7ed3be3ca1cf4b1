//! Morphology parameters of a procedural excavation tool.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::SeededStream;

/// How a parameter is drawn by [`sample_tool_spec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamDist {
    /// Continuous uniform over the declared range.
    Uniform,
    /// Integer uniform over the declared inclusive range.
    Integer,
    /// Bit mask whose low `bits` bits are independent Bernoulli(`p`).
    Bits { bits: u32, p: f64 },
}

/// Declared range and sampling distribution of one [`ToolSpec`] field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamInfo {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub dist: ParamDist,
}

impl ParamInfo {
    pub fn mean(&self) -> f64 {
        match self.dist {
            ParamDist::Uniform | ParamDist::Integer => 0.5 * (self.lo + self.hi),
            ParamDist::Bits { bits, p } => p * ((1u64 << bits) - 1) as f64,
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self.dist {
            ParamDist::Uniform => (self.hi - self.lo) / 12f64.sqrt(),
            ParamDist::Integer => {
                let n = self.hi - self.lo + 1.0;
                ((n * n - 1.0) / 12.0).sqrt()
            }
            ParamDist::Bits { bits, p } => {
                (p * (1.0 - p) * (4f64.powi(bits as i32) - 1.0) / 3.0).sqrt()
            }
        }
    }
}

trait Draw: Sized {
    fn draw(rng: &mut SeededStream, info: &ParamInfo) -> Self;
    fn to_f64(&self) -> f64;
}

impl Draw for f64 {
    fn draw(rng: &mut SeededStream, info: &ParamInfo) -> Self {
        rng.uniform(info.lo, info.hi)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

fn draw_int(rng: &mut SeededStream, info: &ParamInfo) -> u64 {
    match info.dist {
        ParamDist::Bits { bits, p } => (0..bits).fold(0u64, |m, b| {
            if rng.unit() < p {
                m | (1 << b)
            } else {
                m
            }
        }),
        _ => info.lo as u64 + rng.index((info.hi - info.lo) as u64 + 1),
    }
}

impl Draw for u32 {
    fn draw(rng: &mut SeededStream, info: &ParamInfo) -> Self {
        draw_int(rng, info) as u32
    }
    fn to_f64(&self) -> f64 {
        *self as f64
    }
}

impl Draw for u64 {
    fn draw(rng: &mut SeededStream, info: &ParamInfo) -> Self {
        draw_int(rng, info)
    }
    fn to_f64(&self) -> f64 {
        *self as f64
    }
}

macro_rules! tool_spec {
    ($(
        $(#[doc = $doc:literal])*
        $name:ident: $ty:ty = $default:expr, [$lo:expr, $hi:expr], $dist:expr;
    )+) => {
        /// Complete morphology of one excavation tool. Lengths in m, angles in
        /// rad, everything else dimensionless unless noted.
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct ToolSpec {
            $( $(#[doc = $doc])* pub $name: $ty, )+
        }

        impl Default for ToolSpec {
            fn default() -> Self {
                Self { $( $name: $default, )+ }
            }
        }

        /// Every field of [`ToolSpec`] in declaration order.
        pub const TOOL_PARAMS: &[ParamInfo] = &[
            $( ParamInfo { name: stringify!($name), lo: $lo as f64, hi: $hi as f64, dist: $dist }, )+
        ];

        impl ToolSpec {
            /// `(name, value)` for every field in declaration order.
            pub fn values(&self) -> Vec<(&'static str, f64)> {
                vec![ $( (stringify!($name), Draw::to_f64(&self.$name)), )+ ]
            }

            fn draw(rng: &mut SeededStream) -> Self {
                let mut info = TOOL_PARAMS.iter();
                Self { $( $name: <$ty as Draw>::draw(rng, info.next().unwrap()), )+ }
            }
        }
    };
}

use ParamDist::{Bits, Integer, Uniform};

tool_spec! {
    /// Overall outer width of the scoop body.
    width: f64 = 0.16, [0.10, 0.24], Uniform;
    /// Side-wall height above the floor.
    depth: f64 = 0.05, [0.03, 0.07], Uniform;
    /// Straight floor length between the back curve and the lip.
    length: f64 = 0.10, [0.06, 0.20], Uniform;
    wall_thickness: f64 = 0.005, [0.003, 0.008], Uniform;
    /// Fillet radius between floor and side walls.
    bottom_curvature_radius: f64 = 0.01, [0.003, 0.015], Uniform;
    /// Radius of the curve joining the back plate to the floor.
    back_curvature_radius: f64 = 0.09, [0.08, 0.14], Uniform;
    /// Outward lean of the side walls from the floor normal.
    side_wall_flare_angle: f64 = 0.1, [0.0, 0.2], Uniform;
    /// Floor width at the lip relative to the back.
    taper_ratio: f64 = 0.9, [0.8, 1.0], Uniform;
    /// Straight back-plate length beyond the back curve.
    back_wall_extension: f64 = 0.02, [0.0, 0.04], Uniform;
    /// Floor bulge into the cavity at the centerline (negative sags).
    floor_crown: f64 = 0.0, [-0.005, 0.005], Uniform;
    /// Fractional side-wall height lost between the back curve and the lip.
    side_wall_taper: f64 = 0.3, [0.0, 0.4], Uniform;
    /// Lip bend away from the cavity.
    lip_angle: f64 = 0.1, [-0.35, 0.35], Uniform;
    lip_length: f64 = 0.02, [0.012, 0.04], Uniform;
    /// Half thickness of the leading edge.
    lip_edge_radius: f64 = 0.001, [0.0005, 0.0015], Uniform;
    /// Extra lip reach at the centerline (spade shape; negative is concave).
    lip_curvature: f64 = 0.0, [-0.008, 0.008], Uniform;
    teeth_count: u32 = 0, [0, 9], Integer;
    tooth_length: f64 = 0.015, [0.005, 0.03], Uniform;
    /// Tooth base width as a fraction of the tooth pitch.
    tooth_base_width: f64 = 0.6, [0.4, 0.9], Uniform;
    /// 0 gives rounded tips, 1 needle tips.
    tooth_tip_sharpness: f64 = 0.5, [0.0, 1.0], Uniform;
    /// Random tooth displacement as a fraction of the pitch.
    tooth_spacing_jitter: f64 = 0.0, [0.0, 0.3], Uniform;
    /// Bit i set removes tooth i.
    tooth_missing_mask: u32 = 0, [0, 511], Bits { bits: 9, p: 0.1 };
    /// Shift of the whole tooth row as a fraction of the pitch.
    tooth_lateral_offset: f64 = 0.0, [-0.2, 0.2], Uniform;
    serration_amplitude: f64 = 0.0, [0.0, 0.002], Uniform;
    /// 1/m
    serration_frequency: f64 = 100.0, [40.0, 200.0], Uniform;
    mount_offset_x: f64 = 0.0, [-0.01, 0.01], Uniform;
    mount_offset_y: f64 = 0.0, [-0.01, 0.01], Uniform;
    mount_tilt_yaw: f64 = 0.0, [-0.15, 0.15], Uniform;
    mount_tilt_pitch: f64 = 0.0, [-0.15, 0.15], Uniform;
    mount_tilt_roll: f64 = 0.0, [-0.15, 0.15], Uniform;
    /// Tooth and lip shortening at full deterioration.
    edge_bluntness_radius: f64 = 0.001, [0.0, 0.004], Uniform;
    dent_noise_amplitude: f64 = 0.0005, [0.0, 0.0015], Uniform;
    /// 1/m
    dent_noise_frequency: f64 = 40.0, [10.0, 80.0], Uniform;
    dent_noise_octaves: u32 = 2, [1, 4], Integer;
    /// Uniform shell thinning at full deterioration.
    erosion_depth: f64 = 0.0005, [0.0002, 0.0015], Uniform;
    /// Overall wear level; scales every wear effect.
    deterioration: f64 = 0.0, [0.0, 1.0], Uniform;
    /// Left (−1) to right (+1) bias of wear.
    asymmetric_wear: f64 = 0.0, [-1.0, 1.0], Uniform;
    /// Depth of a chipped notch in the lip at full deterioration.
    damage_notch_depth: f64 = 0.0, [0.0, 0.006], Uniform;
    /// Notch center as a fraction of the half width.
    damage_notch_position: f64 = 0.0, [-0.8, 0.8], Uniform;
    damage_notch_width: f64 = 0.015, [0.005, 0.03], Uniform;
    /// Mesh density multiplier.
    resolution_level: u32 = 2, [1, 3], Integer;
    /// Seed for tooth jitter and dent noise.
    seed: u64 = 0, [0, 4_294_967_295u64], Integer;
}

/// Draws a spec with every field from its declared distribution.
pub fn sample_tool_spec(rng: &mut SeededStream) -> ToolSpec {
    ToolSpec::draw(rng)
}

impl ToolSpec {
    /// Checks every field against its declared closed range.
    pub fn validate(&self) -> Result<()> {
        for ((name, v), info) in self.values().into_iter().zip(TOOL_PARAMS) {
            if !v.is_finite() {
                return Err(Error::InvalidToolSpec {
                    field: name.into(),
                    reason: "must be finite".into(),
                });
            }
            if v < info.lo || v > info.hi {
                return Err(Error::InvalidToolSpec {
                    field: name.into(),
                    reason: format!("{v} outside [{}, {}]", info.lo, info.hi),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates; missing fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ToolSpec = serde_json::from_str(text).map_err(|e| {
            // serde reports the offending key in its message; surface it as a field error
            Error::InvalidToolSpec {
                field: json_error_field(&e.to_string()),
                reason: e.to_string(),
            }
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

fn json_error_field(msg: &str) -> String {
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "spec".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_least_forty_documented_parameters() {
        assert!(TOOL_PARAMS.len() >= 40, "{}", TOOL_PARAMS.len());
        assert_eq!(ToolSpec::default().values().len(), TOOL_PARAMS.len());
    }

    #[test]
    fn default_is_valid_and_round_trips() {
        let s = ToolSpec::default();
        s.validate().unwrap();
        let back = ToolSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn negative_width_is_named() {
        let err = ToolSpec::from_json(r#"{"width": -1.0}"#).unwrap_err();
        match err {
            Error::InvalidToolSpec { field, .. } => assert_eq!(field, "width"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ToolSpec::from_json(r#"{"widht": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("widht"));
    }
}
