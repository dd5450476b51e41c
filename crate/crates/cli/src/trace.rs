//! CSV trace of a simulation run.

use std::io::Write;

use parkmpc::SimResult;

pub const TRACE_HEADER: [&str; 11] = [
    "t",
    "x",
    "y",
    "theta",
    "v",
    "delta_cmd",
    "a_cmd",
    "cross_track_err",
    "heading_err",
    "qp_iters",
    "constraint_active",
];

/// Writes one row per sample. Floats use the shortest round-trip
/// representation, so identical runs give identical bytes.
pub fn write_trace<W: Write>(out: W, result: &SimResult) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for s in &result.samples {
        w.write_record([
            s.t.to_string(),
            s.state.x.to_string(),
            s.state.y.to_string(),
            s.state.theta.to_string(),
            s.state.v.to_string(),
            s.command.delta_cmd.to_string(),
            s.command.a_cmd.to_string(),
            s.cross_track_error.to_string(),
            s.heading_error.to_string(),
            s.qp_iterations.to_string(),
            u8::from(s.constraint_active).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
