//! Standard MIDI File reader (formats 0 and 1) plus a minimal writer used to
//! build fixtures.

use super::{map_percussion, DrumEvent, DrumScore, KitLayout, ScoreError};

/// General-MIDI percussion lives on channel 10 (index 9).
pub const PERCUSSION_CHANNEL: u8 = 9;
pub const DEFAULT_TEMPO_US: u32 = 500_000;

/// Parses an SMF with the full-kit percussion map.
pub fn parse_smf(bytes: &[u8]) -> Result<DrumScore, ScoreError> {
    parse_smf_with_layout(bytes, KitLayout::FullKit)
}

pub fn parse_smf_with_layout(bytes: &[u8], layout: KitLayout) -> Result<DrumScore, ScoreError> {
    let raw = read_smf(bytes)?;
    let timing = TempoMap::new(raw.division, &raw.tempos);
    let mut events: Vec<DrumEvent> = raw
        .notes
        .iter()
        .filter(|n| n.channel == PERCUSSION_CHANNEL)
        .filter_map(|n| {
            map_percussion(n.note, layout).map(|drum| DrumEvent {
                time_s: timing.seconds(n.tick),
                drum,
                velocity: n.velocity,
            })
        })
        .collect();
    // Stable sort keeps the file order of simultaneous notes.
    events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    let first_tempo = raw
        .tempos
        .iter()
        .min_by_key(|t| t.0)
        .map_or(DEFAULT_TEMPO_US, |t| t.1);
    Ok(DrumScore::new(
        events,
        timing.seconds(raw.end_tick),
        60e6 / first_tempo as f64,
    ))
}

#[derive(Debug, Clone, Copy)]
enum Division {
    TicksPerQuarter(u16),
    /// Seconds per tick, fixed.
    Smpte(f64),
}

#[derive(Debug)]
struct NoteOn {
    tick: u64,
    channel: u8,
    note: u8,
    velocity: u8,
}

#[derive(Debug)]
struct RawSmf {
    division: Division,
    tempos: Vec<(u64, u32)>,
    notes: Vec<NoteOn>,
    end_tick: u64,
}

struct TempoMap {
    division: Division,
    /// (tick, seconds at tick, µs per quarter from tick on)
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(division: Division, tempos: &[(u64, u32)]) -> Self {
        let mut sorted = tempos.to_vec();
        sorted.sort_by_key(|t| t.0);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_TEMPO_US)];
        if let Division::TicksPerQuarter(tpq) = division {
            for (tick, tempo) in sorted {
                let (t0, s0, us) = *segments.last().unwrap();
                let s = s0 + (tick - t0) as f64 * us as f64 * 1e-6 / tpq as f64;
                if tick == t0 {
                    segments.pop();
                }
                segments.push((tick, s, tempo));
            }
        }
        Self { division, segments }
    }

    fn seconds(&self, tick: u64) -> f64 {
        match self.division {
            Division::Smpte(spt) => tick as f64 * spt,
            Division::TicksPerQuarter(tpq) => {
                let idx = self.segments.partition_point(|s| s.0 <= tick) - 1;
                let (t0, s0, us) = self.segments[idx];
                s0 + (tick - t0) as f64 * us as f64 * 1e-6 / tpq as f64
            }
        }
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    /// Absolute offset of `data[0]` in the file, for error messages.
    base: usize,
    track: usize,
}

impl<'a> Cursor<'a> {
    fn truncated(&self) -> ScoreError {
        ScoreError::TruncatedTrack {
            track: self.track,
            offset: self.base + self.pos,
        }
    }

    fn u8(&mut self) -> Result<u8, ScoreError> {
        let b = *self.data.get(self.pos).ok_or_else(|| self.truncated())?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ScoreError> {
        if self.pos + n > self.data.len() {
            return Err(self.truncated());
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u32, ScoreError> {
        let start = self.base + self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(ScoreError::BadVarint(start))
    }

    fn done(&self) -> bool {
        self.pos >= self.data.len()
    }
}

fn read_smf(bytes: &[u8]) -> Result<RawSmf, ScoreError> {
    if bytes.len() < 14 || &bytes[0..4] != b"MThd" {
        return Err(ScoreError::MalformedHeader("missing MThd magic".into()));
    }
    let len = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
    if len != 6 {
        return Err(ScoreError::MalformedHeader(format!(
            "header length {len}, expected 6"
        )));
    }
    let format = u16::from_be_bytes([bytes[8], bytes[9]]);
    let ntracks = u16::from_be_bytes([bytes[10], bytes[11]]);
    let div = u16::from_be_bytes([bytes[12], bytes[13]]);
    if format == 2 {
        return Err(ScoreError::UnsupportedFormat(2));
    }
    if format > 2 {
        return Err(ScoreError::UnsupportedFormat(format));
    }
    let division = if div & 0x8000 != 0 {
        let fps = -((div >> 8) as u8 as i8) as f64;
        let tpf = (div & 0xff) as f64;
        if fps <= 0.0 || tpf <= 0.0 {
            return Err(ScoreError::MalformedHeader("bad SMPTE division".into()));
        }
        Division::Smpte(1.0 / (fps * tpf))
    } else if div == 0 {
        return Err(ScoreError::MalformedHeader("zero division".into()));
    } else {
        Division::TicksPerQuarter(div)
    };

    let mut raw = RawSmf {
        division,
        tempos: Vec::new(),
        notes: Vec::new(),
        end_tick: 0,
    };
    let mut pos = 14;
    let mut track = 0usize;
    while pos + 8 <= bytes.len() && track < ntracks as usize {
        let id = &bytes[pos..pos + 4];
        let clen = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body = pos + 8;
        if id != b"MTrk" {
            // Unknown chunk types are skipped per the SMF rules.
            pos = body.saturating_add(clen);
            continue;
        }
        if body + clen > bytes.len() {
            return Err(ScoreError::TruncatedTrack {
                track,
                offset: bytes.len(),
            });
        }
        let mut cur = Cursor {
            data: &bytes[body..body + clen],
            pos: 0,
            base: body,
            track,
        };
        read_track(&mut cur, &mut raw)?;
        pos = body + clen;
        track += 1;
    }
    if track < ntracks as usize && pos < bytes.len() {
        return Err(ScoreError::TruncatedTrack {
            track,
            offset: bytes.len(),
        });
    }
    Ok(raw)
}

fn read_track(cur: &mut Cursor<'_>, raw: &mut RawSmf) -> Result<(), ScoreError> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while !cur.done() {
        tick += cur.varint()? as u64;
        let first = cur.u8()?;
        match first {
            0xff => {
                let kind = cur.u8()?;
                let len = cur.varint()? as usize;
                let data = cur.take(len)?;
                match kind {
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us > 0 {
                            raw.tempos.push((tick, us));
                        }
                    }
                    0x2f => {
                        raw.end_tick = raw.end_tick.max(tick);
                        return Ok(());
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                let len = cur.varint()? as usize;
                cur.take(len)?;
                running = None;
            }
            _ => {
                let (status, d1) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, cur.u8()?)
                } else {
                    // A data byte with no running status cannot be decoded.
                    let status = running.ok_or_else(|| cur.truncated())?;
                    (status, first)
                };
                let channel = status & 0x0f;
                match status & 0xf0 {
                    0x90 => {
                        let vel = cur.u8()?;
                        if vel > 0 {
                            raw.notes.push(NoteOn {
                                tick,
                                channel,
                                note: d1 & 0x7f,
                                velocity: vel & 0x7f,
                            });
                        }
                    }
                    0x80 | 0xa0 | 0xb0 | 0xe0 => {
                        cur.u8()?;
                    }
                    0xc0 | 0xd0 => {}
                    // 0xf1..0xfe system messages have no place in a file.
                    _ => return Err(cur.truncated()),
                }
            }
        }
        raw.end_tick = raw.end_tick.max(tick);
    }
    Ok(())
}

/// Minimal SMF writer for fixtures: one track per entry, events given as
/// `(absolute_tick, raw_message_bytes)`. End-of-track is appended.
pub fn write_smf(format: u16, division: u16, tracks: &[Vec<(u64, Vec<u8>)>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&format.to_be_bytes());
    out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&division.to_be_bytes());
    for track in tracks {
        let mut events = track.clone();
        events.sort_by_key(|e| e.0);
        let mut body = Vec::new();
        let mut last = 0u64;
        for (tick, msg) in &events {
            push_varint(&mut body, (tick - last) as u32);
            body.extend_from_slice(msg);
            last = *tick;
        }
        push_varint(&mut body, 0);
        body.extend_from_slice(&[0xff, 0x2f, 0x00]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}

pub fn push_varint(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 5];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(stack[i] | if i > 0 { 0x80 } else { 0 });
    }
}

pub fn tempo_message(us_per_quarter: u32) -> Vec<u8> {
    let b = us_per_quarter.to_be_bytes();
    vec![0xff, 0x51, 0x03, b[1], b[2], b[3]]
}

pub fn note_on_message(channel: u8, note: u8, velocity: u8) -> Vec<u8> {
    vec![0x90 | (channel & 0x0f), note, velocity]
}

/// General-MIDI note used when writing a drum back out.
pub fn gm_note(drum: super::DrumId) -> Option<u8> {
    use super::DrumId as D;
    Some(match drum {
        D::Snare => 38,
        D::Tom => 45,
        D::Ride => 51,
        D::HiHat => 42,
        D::Crash => 49,
        D::Kick => 36,
        D::None => return None,
    })
}

/// Writes a score as a format-0 file at the default tempo.
pub fn score_to_smf(score: &DrumScore, division: u16) -> Vec<u8> {
    let ticks_per_s = division as f64 * 1e6 / DEFAULT_TEMPO_US as f64;
    let track: Vec<(u64, Vec<u8>)> = score
        .events
        .iter()
        .filter_map(|e| {
            gm_note(e.drum).map(|n| {
                (
                    (e.time_s * ticks_per_s).round() as u64,
                    note_on_message(PERCUSSION_CHANNEL, n, e.velocity),
                )
            })
        })
        .collect();
    write_smf(0, division, &[track])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::DrumId;

    #[test]
    fn single_snare_at_one_beat() {
        let bytes = write_smf(0, 480, &[vec![(480, note_on_message(9, 38, 100))]]);
        let s = parse_smf(&bytes).unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.events[0].drum, DrumId::Snare);
        assert_eq!(s.events[0].velocity, 100);
        assert!((s.events[0].time_s - 0.5).abs() < 1e-12);
        assert!((s.bpm - 120.0).abs() < 1e-12);
    }

    #[test]
    fn explicit_tempo_quarter_is_half_second() {
        let bytes = write_smf(
            0,
            96,
            &[vec![(0, tempo_message(500_000)), (96, note_on_message(9, 42, 64))]],
        );
        let s = parse_smf(&bytes).unwrap();
        assert!((s.events[0].time_s - 0.5).abs() < 1e-12);
        assert_eq!(s.events[0].drum, DrumId::HiHat);
    }

    #[test]
    fn tempo_change_mid_track() {
        // 120 bpm for one beat, then 60 bpm: beat 2 lands at 0.5 + 1.0 s.
        let bytes = write_smf(
            1,
            100,
            &[
                vec![(100, tempo_message(1_000_000))],
                vec![(100, note_on_message(9, 38, 80)), (200, note_on_message(9, 38, 80))],
            ],
        );
        let s = parse_smf(&bytes).unwrap();
        let t: Vec<f64> = s.events.iter().map(|e| e.time_s).collect();
        assert!((t[0] - 0.5).abs() < 1e-12);
        assert!((t[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn empty_track() {
        let bytes = write_smf(0, 480, &[vec![]]);
        let s = parse_smf(&bytes).unwrap();
        assert!(s.events.is_empty());
    }

    #[test]
    fn running_status_and_ignored_channels() {
        // note-on ch10, then two running-status notes (second with vel 0 = off),
        // then a piano note on channel 1.
        let mut body = Vec::new();
        body.extend_from_slice(&[0x00, 0x99, 38, 90]);
        body.extend_from_slice(&[0x60, 42, 70]);
        body.extend_from_slice(&[0x10, 42, 0]);
        body.extend_from_slice(&[0x00, 0x90, 60, 100]);
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        let mut bytes = write_smf(0, 96, &[]);
        bytes[11] = 1;
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(body.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&body);
        let s = parse_smf(&bytes).unwrap();
        let drums: Vec<DrumId> = s.events.iter().map(|e| e.drum).collect();
        assert_eq!(drums, vec![DrumId::Snare, DrumId::HiHat]);
        assert!((s.events[1].time_s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_smf(b"RIFF0000000000"), Err(ScoreError::MalformedHeader(_))));
        let mut bad_len = write_smf(0, 96, &[vec![]]);
        bad_len[7] = 7;
        assert!(matches!(parse_smf(&bad_len), Err(ScoreError::MalformedHeader(_))));

        let fmt2 = write_smf(2, 96, &[vec![]]);
        assert_eq!(parse_smf(&fmt2), Err(ScoreError::UnsupportedFormat(2)));

        let mut trunc = write_smf(0, 96, &[vec![(0, note_on_message(9, 38, 90))]]);
        // Drop end-of-track and the note's velocity, keep the declared length consistent.
        let n = trunc.len();
        trunc.truncate(n - 5);
        let body_len = (trunc.len() - 22) as u32;
        trunc[18..22].copy_from_slice(&body_len.to_be_bytes());
        assert!(matches!(parse_smf(&trunc), Err(ScoreError::TruncatedTrack { .. })));

        let mut chunk_short = write_smf(0, 96, &[vec![(0, note_on_message(9, 38, 90))]]);
        chunk_short.truncate(chunk_short.len() - 2);
        assert!(matches!(parse_smf(&chunk_short), Err(ScoreError::TruncatedTrack { .. })));

        let mut body = vec![0xff, 0xff, 0xff, 0xff, 0x7f, 0x99, 38, 90];
        body.extend_from_slice(&[0x00, 0xff, 0x2f, 0x00]);
        let mut v = write_smf(0, 96, &[]);
        v[11] = 1;
        v.extend_from_slice(b"MTrk");
        v.extend_from_slice(&(body.len() as u32).to_be_bytes());
        v.extend_from_slice(&body);
        assert!(matches!(parse_smf(&v), Err(ScoreError::BadVarint(_))));
    }

    #[test]
    fn varint_encoding() {
        for (v, enc) in [
            (0u32, vec![0x00]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            push_varint(&mut out, v);
            assert_eq!(out, enc);
        }
    }

    #[test]
    fn two_drum_layout_applies_on_parse() {
        let bytes = write_smf(0, 96, &[vec![(0, note_on_message(9, 49, 90)), (96, note_on_message(9, 48, 90))]]);
        let s = parse_smf_with_layout(&bytes, KitLayout::TwoDrum).unwrap();
        let drums: Vec<DrumId> = s.events.iter().map(|e| e.drum).collect();
        assert_eq!(drums, vec![DrumId::HiHat, DrumId::Snare]);
    }
}
