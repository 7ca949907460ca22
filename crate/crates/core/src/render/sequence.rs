use std::io;
use std::path::{Path, PathBuf};

use num_traits::{Signed, Zero};
use thiserror::Error;

use super::{render_svg, FrameSpec};
use crate::osc::OscPacket;
use crate::rational::Rational;
use crate::scene::{Scene, SceneSnapshot};
use crate::sequencer::Timeline;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("frame rate must be positive")]
    BadFrameRate,
    #[error("duration must not be negative")]
    BadDuration,
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// `ceil(duration × fps)`, at least one frame.
pub fn frame_count(duration: Rational, fps: u32) -> u64 {
    let frames = (duration * Rational::from_integer(i64::from(fps))).ceil().to_integer();
    u64::try_from(frames).unwrap_or(0).max(1)
}

/// Virtual time shown by each frame: the end of its interval,
/// `min((i+1)/fps, duration)`, so the last frame shows the final state.
pub fn frame_times(duration: Rational, fps: u32) -> Result<Vec<Rational>, RenderError> {
    if fps == 0 {
        return Err(RenderError::BadFrameRate);
    }
    if duration.is_negative() {
        return Err(RenderError::BadDuration);
    }
    let fps_r = Rational::from_integer(i64::from(fps));
    Ok((0..frame_count(duration, fps))
        .map(|i| (Rational::from_integer(i as i64 + 1) / fps_r).min(duration))
        .collect())
}

pub fn frame_name(index: u64) -> String {
    format!("frame_{index:06}.svg")
}

/// Plays `timeline` into `scene` in virtual time and calls `frame` with the
/// state at every frame time. Messages at or before a frame's time are
/// applied before it; the transport advances exactly between messages.
/// `duration` defaults to the timeline's.
pub fn simulate(
    timeline: &Timeline,
    scene: &mut Scene,
    fps: u32,
    duration: Option<Rational>,
    mut frame: impl FnMut(u64, Rational, &Scene) -> Result<(), RenderError>,
) -> Result<u64, RenderError> {
    let duration = duration.unwrap_or_else(|| timeline.duration());
    let times = frame_times(duration, fps)?;
    let messages = timeline.all_messages();
    let mut pending = messages.iter().peekable();
    let mut now = Rational::zero();
    for (index, &time) in times.iter().enumerate() {
        while let Some(next) = pending.next_if(|m| m.time <= time) {
            advance(scene, &mut now, next.time);
            scene.dispatch(&OscPacket::Message(next.message.clone()));
        }
        advance(scene, &mut now, time);
        frame(index as u64, time, scene)?;
    }
    Ok(times.len() as u64)
}

fn advance(scene: &mut Scene, now: &mut Rational, to: Rational) {
    if to > *now {
        scene.tick(to - *now).expect("forward steps are never negative");
        *now = to;
    }
}

/// Renders every frame of `timeline` into `out_dir` as `frame_%06d.svg`.
pub fn render_sequence(
    timeline: &Timeline,
    scene: &mut Scene,
    fps: u32,
    duration: Option<Rational>,
    canvas: &FrameSpec,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, RenderError> {
    if fps == 0 {
        return Err(RenderError::BadFrameRate);
    }
    std::fs::create_dir_all(out_dir).map_err(|source| RenderError::Io {
        path: out_dir.to_owned(),
        source,
    })?;
    let mut files = Vec::new();
    simulate(timeline, scene, fps, duration, |index, time, scene| {
        let spec = FrameSpec {
            index,
            time,
            ..canvas.clone()
        };
        let path = out_dir.join(frame_name(index));
        std::fs::write(&path, render_svg(&scene.snapshot(), &spec)).map_err(|source| RenderError::Io {
            path: path.clone(),
            source,
        })?;
        files.push(path);
        Ok(())
    })?;
    Ok(files)
}

/// Snapshots at every frame time; convenient for checks.
pub fn snapshots(
    timeline: &Timeline,
    scene: &mut Scene,
    fps: u32,
    duration: Option<Rational>,
) -> Result<Vec<SceneSnapshot>, RenderError> {
    let mut out = Vec::new();
    simulate(timeline, scene, fps, duration, |_, _, scene| {
        out.push(scene.snapshot());
        Ok(())
    })?;
    Ok(out)
}
