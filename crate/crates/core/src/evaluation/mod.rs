//! Desk-scale benchmark: task splits along the generalization axes, the
//! ablation variants, parallel seeded evaluation and reports.

mod benchmark;
mod report;
mod run;

pub use benchmark::{
    family_by_name, make_splits, train_demos, BenchmarkConfig, Episode, Split, TestTask,
    EMBEDDED_BENCHMARK,
};
pub use report::{ordering_holds, read_table, summarize, write_report, TableRow};
pub use run::{
    load_results, read_results, run_ablation, run_benchmark, run_benchmark_with, run_in_pool,
    save_results, write_results, EpisodeRow, ResultsMeta, RESULTS_HEADER,
};

use thiserror::Error;

use crate::demonstrations::DemoError;
use crate::skill_discovery::DiscoveryError;
use crate::world::family::FamilyError;

token_enum!(Variant {
    Complete => "complete",
    RegularSkill => "regular_skill",
    NoCanonicalization => "no_canonicalization",
    ActionInterface => "action_interface",
    HeatmapInterface => "heatmap_interface",
});

token_enum!(SplitKind {
    Train => "train",
    Spatial => "spatial",
    Appearance => "appearance",
    Distractor => "distractor",
    Compositional => "compositional",
});

/// The switches an ablation flips.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pipeline {
    /// Subtract an on-object anchor from clouds and trajectories.
    pub canonicalize: bool,
    /// Skill entries start at the episode's first step.
    pub include_approach: bool,
    /// Free-space motion between skills is planned.
    pub stitch: bool,
    /// The policy sees only the target's mask, not the whole scene.
    pub mask_only: bool,
    /// Whole-scene clouds carry a per-point target indicator.
    pub indicator_channel: bool,
}

impl Pipeline {
    pub const COMPLETE: Pipeline = Pipeline {
        canonicalize: true,
        include_approach: false,
        stitch: true,
        mask_only: true,
        indicator_channel: false,
    };
}

pub fn apply_ablation(variant: Variant, p: Pipeline) -> Pipeline {
    match variant {
        Variant::Complete => p,
        Variant::RegularSkill => Pipeline {
            include_approach: true,
            stitch: false,
            ..p
        },
        Variant::NoCanonicalization => Pipeline {
            canonicalize: false,
            ..p
        },
        Variant::ActionInterface => Pipeline {
            canonicalize: false,
            mask_only: false,
            ..p
        },
        Variant::HeatmapInterface => Pipeline {
            canonicalize: false,
            mask_only: false,
            indicator_channel: true,
            ..p
        },
    }
}

impl Variant {
    pub fn pipeline(self) -> Pipeline {
        apply_ablation(self, Pipeline::COMPLETE)
    }

    pub fn canonicalizes(self) -> bool {
        self.pipeline().canonicalize
    }

    pub fn stitches(self) -> bool {
        self.pipeline().stitch
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("benchmark config: {0}")]
    Config(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error(transparent)]
    Discovery(#[from] DiscoveryError),
    #[error("library was built for `{found}`, evaluation asked for `{expected}`")]
    LibraryMismatch { expected: Variant, found: Variant },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub(crate) fn io_error(path: &std::path::Path) -> impl Fn(std::io::Error) -> EvalError + '_ {
    move |e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}
