//! Audio-rate lattice dynamics and the excitation protocol.

pub mod excitation;
pub mod integrator;

pub use excitation::{
    clamp_f_ilm, compute_separation, deformation_excitation, deformation_signal, excite_tool, jitter_bound,
    jitter_schedule, stiffness_gain, window_around, DeformationError, DeformationSignal, Envelope, EventSchedule,
    EventSource, ExcitationEvent, ExcitationParams, SeparationField, F_ILM_MAX,
};
pub use integrator::{
    mechanical_energy, step_block, DynamicsFault, LatticeState, NullSink, PhysicalLattice, PhysicalSpring, StepScratch,
    VelocityRecorder, VelocitySink, STABILITY_LIMIT,
};
