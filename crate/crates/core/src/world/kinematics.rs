use super::{wrap_angle, Command, Pose};

/// Exact unicycle integration over `dt` seconds under a constant command.
pub fn step_kinematics(pose: Pose, cmd: Command, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    let Command { v, omega } = cmd;
    if omega.abs() < 1e-9 {
        return Pose {
            x: pose.x + v * pose.w.cos() * dt,
            y: pose.y + v * pose.w.sin() * dt,
            w: pose.w,
        };
    }
    let radius = v / omega;
    let w1 = pose.w + omega * dt;
    Pose {
        x: pose.x + radius * (w1.sin() - pose.w.sin()),
        y: pose.y - radius * (w1.cos() - pose.w.cos()),
        w: wrap_angle(w1),
    }
}
