//! Differential-flatness baseline: minimum-snap trajectories through
//! waypoints, exact time scaling and a cascaded tracking controller.

mod snap;
mod track;

pub use snap::{
    rectangle_plan, solve_min_snap, solve_min_snap_detailed, PolyTrajectory, SnapProblem, SnapSolution, Waypoint,
    DEFAULT_ORDER, POSITION_CONTINUITY, YAW, YAW_CONTINUITY,
};
pub use track::{run_dfbc, run_dfbc_with, start_state, DfbcController, TrackingGains, TRACKING_LIMIT};
