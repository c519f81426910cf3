//! Minimum-snap trajectory through ten laps of the rectangle, time-scaled
//! versions of it and its CSV export.

use gcnet_lab::dfbc::{rectangle_plan, solve_min_snap_detailed};

fn main() -> gcnet_lab::Result<()> {
    let problem = rectangle_plan(10, 40.0)?;
    println!("{} waypoint visits, {} segments", problem.waypoints.len(), problem.segment_times.len());
    let t = std::time::Instant::now();
    let sol = solve_min_snap_detailed(&problem)?;
    println!("solved in {:.2} s, KKT residual {:.1e}", t.elapsed().as_secs_f64(), sol.kkt_residual);
    let traj = sol.trajectory;
    for alpha in [0.7, 1.0, 1.45] {
        let s = traj.time_scale(alpha)?;
        let peak_v = (0..2000).map(|i| s.velocity(s.duration() * i as f64 / 2000.0).norm()).fold(0.0, f64::max);
        println!(
            "α = {alpha:.2}: T = {:.2} s, first lap {:.2} s, snap cost {:.1}, peak speed {peak_v:.2} m/s",
            s.duration(),
            s.lap_boundaries(4)[0],
            s.snap_cost()
        );
    }
    for i in 0..=8 {
        let t = 0.5 * i as f64;
        let [x, y, z, psi] = traj.eval(t, 0);
        println!("t = {t:.1}  ({x:+.3}, {y:+.3}, {z:+.3})  ψ = {:+.1}°", psi.to_degrees());
    }
    traj.save("rectangle.csv")
}
