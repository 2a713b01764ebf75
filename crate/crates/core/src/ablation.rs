//! Mixing the grounding and segmentation transform blocks of different
//! configurations, to measure how much each adaptor contributes.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::search_space::{base_config, Configuration, SearchSpace, GROUNDING_PREFIX, PROMPT_ID, SEGMENTATION_PREFIX};

/// Source of one transform block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockSource {
    Optimal,
    Base,
    Random,
}

/// `(grounding block, segmentation block)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationRegime {
    pub grounding: BlockSource,
    pub segmentation: BlockSource,
}

impl AblationRegime {
    pub const ALL: [AblationRegime; 5] = [
        Self::new(BlockSource::Optimal, BlockSource::Optimal),
        Self::new(BlockSource::Optimal, BlockSource::Base),
        Self::new(BlockSource::Optimal, BlockSource::Random),
        Self::new(BlockSource::Base, BlockSource::Optimal),
        Self::new(BlockSource::Random, BlockSource::Optimal),
    ];

    pub const fn new(grounding: BlockSource, segmentation: BlockSource) -> Self {
        Self { grounding, segmentation }
    }

    /// Builds the regime's configuration. Parameters outside the two
    /// transform blocks (sentence choice, point count) come from `optimal`;
    /// random blocks are drawn uniformly with `seed`.
    pub fn compose(&self, optimal: &Configuration, space: &SearchSpace, seed: u64) -> Configuration {
        let base = base_config(space);
        let random = space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |src: BlockSource| match src {
            BlockSource::Optimal => optimal,
            BlockSource::Base => &base,
            BlockSource::Random => &random,
        };
        let mut out = optimal.clone();
        for (name, _) in optimal.iter() {
            let source = if name == PROMPT_ID {
                continue;
            } else if name.starts_with(GROUNDING_PREFIX) {
                pick(self.grounding)
            } else if name.starts_with(SEGMENTATION_PREFIX) {
                pick(self.segmentation)
            } else {
                continue;
            };
            if let Some(v) = source.get(name) {
                out.set(name, v);
            }
        }
        out
    }
}

impl fmt::Display for BlockSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockSource::Optimal => "optimal",
            BlockSource::Base => "base",
            BlockSource::Random => "random",
        })
    }
}

impl fmt::Display for AblationRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.grounding, self.segmentation)
    }
}

impl FromStr for BlockSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "optimal" => Ok(Self::Optimal),
            "base" => Ok(Self::Base),
            "random" => Ok(Self::Random),
            _ => Err(format!("unknown block source `{s}`")),
        }
    }
}

impl FromStr for AblationRegime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let regime = s
            .split_once('-')
            .ok_or_else(|| format!("regime `{s}` is not of the form <grounding>-<segmentation>"))
            .and_then(|(g, seg)| Ok(Self::new(g.parse()?, seg.parse()?)))?;
        if !Self::ALL.contains(&regime) {
            let names: Vec<String> = Self::ALL.iter().map(|r| r.to_string()).collect();
            return Err(format!("unsupported regime `{s}`; expected one of {}", names.join(", ")));
        }
        Ok(regime)
    }
}
