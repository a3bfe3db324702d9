//! Object-centric skill learning and composition in a kinematic tabletop
//! simulator.

macro_rules! token_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(&self) -> &'static str {
                match self { $($name::$variant => $tok),+ }
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.token())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($tok => Ok($name::$variant),)+
                    _ => Err(format!("unknown {} `{}`", stringify!($name).to_lowercase(), s)),
                }
            }
        }
    };
}

pub mod demonstrations;
pub mod evaluation;
pub mod executor;
pub mod geometry;
pub mod high_level_planner;
pub mod low_level_policy;
pub mod sensing;
pub mod skill_discovery;
pub mod world;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_4d76_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a path of indices.
pub fn mix_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |h, &p| splitmix(h ^ splitmix(p)))
}
