//! Selection, mutation and recombination dynamics on finite sequence spaces.
//!
//! The forward equation is solved four independent ways: direct ODE
//! integration ([`dynamics`]), an iterated-integral recursion over a site
//! ordering ([`recursion`]), a matrix-exponential closed form
//! ([`closedform`]), and Monte Carlo over dual partitioning processes
//! ([`glpp`], [`ancestry`]). [`validate`] runs them side by side.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod ancestry;
pub mod closedform;
pub mod dynamics;
pub mod error;
pub mod glpp;
pub mod labels;
pub mod montecarlo;
pub mod partitions;
pub mod recursion;
pub mod scenario;
pub mod typespace;
pub mod validate;

pub use ancestry::{aig_decorate, aig_estimate, aig_propagate, aig_sample, AigBuilder, AncestryGraph, MutationMarks};
pub use closedform::{flow_bullet, mutation_envelope_apply, psi_envelope, smr_solve, BulletFlow};
pub use dynamics::{assumption_psi_check, ode_solve, ode_trajectory, AssumptionReport, Flow, MutationScope, OdeConfig, OdeFlow, PsiSpec};
pub use error::{Error, Result};
pub use glpp::{duality_estimate, duality_h, glpp_simulate, DualityConfig, Glpp, GlppEvent, GlppMode, GlppState};
pub use labels::{
    assumption_h_check, site_process_step, ClockProcess, LabelProcess, LabelState, MutationFlagProcess, SiteProcessState, SiteValue,
    YuleProcess,
};
pub use montecarlo::{replicate_rng, MCEstimate};
pub use partitions::{LabelledPartition, Partition, RecombinationRates};
pub use recursion::{truncated_solve, OrderingPolicy, RecursionConfig, SiteOrdering};
pub use scenario::{parse_scenario, Scenario};
pub use typespace::{
    condition_on_active, product_assemble, product_assemble_on, sample_type, tv_distance, ActiveSplit, DistributionRecord, Layout,
    SignedMeasure, SiteSet, TypeDistribution, TypeSpace,
};
pub use validate::{run_validate, Route, Tolerances, ValidateConfig, ValidationReport};
