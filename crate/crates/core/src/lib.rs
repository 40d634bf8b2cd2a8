//! Multi-group multicast beamforming solvers.
//!
//! A transmitter with `N` antennas serves `M` multicast groups covering `K`
//! single-antenna users. Two design problems are supported:
//!
//! * **QoS**: minimize total transmit power subject to a per-user SINR target
//!   and a per-antenna peak power cap.
//! * **Max-min fairness (MMF)**: maximize the minimum weighted SINR subject to
//!   the per-antenna caps.
//!
//! Both are non-convex QCQPs. The solvers here convexify the SINR constraints
//! with the convex-concave procedure (CCP) and solve each convex subproblem
//! with a tailored ADMM splitting whose update steps all have closed forms:
//! per-user QCQP-1 projections (cubic/quartic secular equations), per-antenna
//! ball projections, and cached Hermitian solves for the beamformer block.
//! A consensus-ADMM engine for the same subproblems is included as a
//! cross-check baseline, and the MMF problem is reduced to a bisection over
//! scaled QoS-style subproblems.
//!
//! Module map:
//!
//! * [`model`] — problem instances, synthetic channels, SINR/feasibility.
//! * [`rootfind`] — cubic/quartic real roots and a safeguarded scalar solver.
//! * [`qcqp1`] — closed-form single-constraint subproblem kernels.
//! * [`admm`] — the inner-loop ADMM engines.
//! * [`ccp`] — outer convex-concave drivers and initialization.
//! * [`mmf`] — max-min fairness bisection.

pub mod admm;
pub mod ccp;
pub mod mmf;
pub mod model;
pub mod qcqp1;
pub mod rootfind;

pub use num_complex::Complex64;
