//! Deterministic discrete-event simulator of an SDN-controlled,
//! energy-efficient PON mobile fronthaul.
//!
//! The crate models a two-antenna fronthaul where each antenna hangs off
//! its own ONU and OLT line card. When a cell goes dark the OLT puts that
//! ONU / line-card pair to sleep; a lightweight controller at the
//! aggregation node and an SDN controller for the aggregation network then
//! reroute the affected VLAN through the surviving pair so the UE keeps
//! reaching its network-function server.
//!
//! Modules, bottom-up:
//!
//! - [`time`]: integer-nanosecond clock.
//! - [`topology`]: node/link graph, VLAN paths, the reference testbed.
//! - [`dataplane`]: flow tables, drop-tail queues, power state machines.
//! - [`controlplane`]: OLT agent, LiT and SDN controllers, rerouting.
//! - [`traffic`]: probe and CBR workloads.
//! - [`engine`]: the event loop and its NDJSON log.
//! - [`metrics`]: tap-based reconfiguration times, PMF, delay and loss.
//! - [`energy`]: average-power savings of sleeping a pair.
//! - [`scenario`]: JSON scenario files.
//!
//! ```
//! use fronthaul_sim::controlplane::compute_reroute;
//! use fronthaul_sim::topology::{build_reference_topology, VlanId};
//!
//! let t = build_reference_topology();
//! let off = ["ONU2", "LC2"].iter().map(|l| t.find(l).unwrap()).collect();
//! let path = compute_reroute(&t, VlanId(2), &off).unwrap();
//! assert_eq!(t.path_string(&path.hops), "ONU1-LC1-L2SW-s1-s3-NF2");
//! ```

pub mod controlplane;
pub mod dataplane;
pub mod energy;
pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod time;
pub mod topology;
pub mod traffic;

pub use engine::{run, EventLog, RunConfig, RunOutput, Simulation};
pub use scenario::Scenario;
pub use time::SimTime;
pub use topology::{build_reference_topology, Topology};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/forwarding.md")]
    mod forwarding {}
    #[doc = include_str!("../../../book/src/reconfiguration.md")]
    mod reconfiguration {}
    #[doc = include_str!("../../../book/src/measurement.md")]
    mod measurement {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/scenarios-cli.md")]
    mod scenarios_cli {}
}
