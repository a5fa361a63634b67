//! Per-step episode records and their text dump.

use std::fmt::Write as _;

use crate::choreography::Vec3;
use crate::score::DrumId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandRecord {
    pub held: bool,
    pub head: Vec3,
    pub tail: Vec3,
    pub ref_head: Vec3,
    pub ref_tail: Vec3,
    pub arm_force: Vec3,
    pub wrist_vel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlayedHit {
    pub hand: usize,
    pub drum: DrumId,
    pub step: usize,
}

/// What an episode did, step by step. `steps[t]` is the state after the
/// action taken at control step t.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub steps: Vec<Vec<HandRecord>>,
    pub hits: Vec<PlayedHit>,
    /// Applied actions, one flat vector per step.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub drum_contacts: usize,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("trace line {line}: {msg}")]
pub struct TraceParseError {
    pub line: usize,
    pub msg: String,
}

fn v3(v: &Vec3) -> String {
    format!("{:.9} {:.9} {:.9}", v.x, v.y, v.z)
}

impl EpisodeTrace {
    pub fn n_hand(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    /// Text dump. `S` lines hold one hand at one step, `H` lines one played
    /// hit, `R` lines the per-step reward, `A` lines the applied action
    /// (written exactly, so a loaded trace can be replayed).
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (t, hands) in self.steps.iter().enumerate() {
            for (h, r) in hands.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "S\t{t}\t{h}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    r.held as u8,
                    v3(&r.head),
                    v3(&r.tail),
                    v3(&r.ref_head),
                    v3(&r.ref_tail),
                    v3(&r.arm_force),
                    v3(&r.wrist_vel)
                );
            }
        }
        for (t, r) in self.rewards.iter().enumerate() {
            let _ = writeln!(out, "R\t{t}\t{r:.9}");
        }
        for (t, a) in self.actions.iter().enumerate() {
            let vals: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "A\t{t}\t{}", vals.join(" "));
        }
        for hit in &self.hits {
            let _ = writeln!(out, "H\t{}\t{}\t{}", hit.step, hit.hand, hit.drum.name());
        }
        let _ = writeln!(out, "C\t{}", self.drum_contacts);
        out
    }

    /// Reads a dump back.
    pub fn load(text: &str) -> Result<Self, TraceParseError> {
        let mut trace = EpisodeTrace::default();
        for (i, line) in text.lines().enumerate() {
            let err = |msg: &str| TraceParseError {
                line: i + 1,
                msg: msg.to_string(),
            };
            let f: Vec<&str> = line.split('\t').collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| err("bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| err("bad index"));
            let vec = |s: &str| -> Result<Vec3, TraceParseError> {
                let p: Vec<f64> = s.split(' ').map(num).collect::<Result<_, _>>()?;
                if p.len() != 3 {
                    return Err(err("expected three coordinates"));
                }
                Ok(Vec3::new(p[0], p[1], p[2]))
            };
            match f.first().copied() {
                Some("S") if f.len() == 10 => {
                    let t = idx(f[1])?;
                    let h = idx(f[2])?;
                    if t > trace.steps.len() || (t == trace.steps.len()) != (h == 0) {
                        return Err(err("steps out of order"));
                    }
                    if t == trace.steps.len() {
                        trace.steps.push(Vec::new());
                    }
                    if h != trace.steps[t].len() {
                        return Err(err("hands out of order"));
                    }
                    trace.steps[t].push(HandRecord {
                        held: f[3] == "1",
                        head: vec(f[4])?,
                        tail: vec(f[5])?,
                        ref_head: vec(f[6])?,
                        ref_tail: vec(f[7])?,
                        arm_force: vec(f[8])?,
                        wrist_vel: vec(f[9])?,
                    });
                }
                Some("R") if f.len() == 3 => trace.rewards.push(num(f[2])?),
                Some("A") if f.len() == 3 => {
                    if idx(f[1])? != trace.actions.len() {
                        return Err(err("actions out of order"));
                    }
                    let a = if f[2].is_empty() { Vec::new() } else { f[2].split(' ').map(num).collect::<Result<_, _>>()? };
                    trace.actions.push(a);
                }
                Some("H") if f.len() == 4 => trace.hits.push(PlayedHit {
                    step: idx(f[1])?,
                    hand: idx(f[2])?,
                    drum: DrumId::from_name(f[3]).ok_or_else(|| err("unknown drum"))?,
                }),
                Some("C") if f.len() == 2 => trace.drum_contacts = idx(f[1])?,
                Some("") | None => {}
                _ => return Err(err("unrecognized record")),
            }
        }
        Ok(trace)
    }
}
