use std::collections::HashMap;

use super::{MidiPiece, Note, TempoChange};
use crate::error::{Error, Result};

/// Resolution of files produced by [`write_midi`].
pub const OUTPUT_TICKS_PER_QUARTER: u32 = 480;

/// A parsed piece plus non-fatal problems found while reading it.
#[derive(Debug, Clone)]
pub struct MidiReport {
    pub piece: MidiPiece,
    pub warnings: Vec<String>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::MalformedMidi { offset: self.pos, reason: reason.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return self.err(format!("unexpected end of file reading {n} bytes"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        self.err("variable-length quantity longer than 4 bytes")
    }
}

#[derive(Debug)]
enum RawEvent {
    NoteOn { channel: u8, pitch: u8, velocity: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Tempo(u32),
}

struct Track {
    events: Vec<(u64, RawEvent)>,
    end_tick: u64,
}

fn read_track(r: &mut Reader<'_>) -> Result<Track> {
    let start = r.pos;
    if r.take(4)? != b"MTrk" {
        r.pos = start;
        return r.err("expected MTrk chunk");
    }
    let len = r.u32()? as usize;
    let end = r.pos + len;
    if end > r.bytes.len() {
        return r.err("track chunk runs past end of file");
    }
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    while r.pos < end {
        tick += r.vlq()? as u64;
        let mut status = r.u8()?;
        let first_data = if status < 0x80 {
            let Some(rs) = running else {
                r.pos -= 1;
                return r.err("data byte without running status");
            };
            let data = status;
            status = rs;
            Some(data)
        } else {
            None
        };
        match status {
            0xff => {
                running = None;
                let kind = r.u8()?;
                let len = r.vlq()? as usize;
                let data = r.take(len)?;
                match kind {
                    0x2f => {
                        r.pos = end;
                        break;
                    }
                    0x51 if len == 3 => {
                        let uspq = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if uspq > 0 {
                            events.push((tick, RawEvent::Tempo(uspq)));
                        }
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.vlq()? as usize;
                r.take(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let channel = status & 0x0f;
                let data = |r: &mut Reader<'_>, pre: &mut Option<u8>| -> Result<u8> {
                    let b = match pre.take() {
                        Some(b) => b,
                        None => r.u8()?,
                    };
                    if b >= 0x80 {
                        r.pos -= 1;
                        return r.err("status byte where data byte expected");
                    }
                    Ok(b)
                };
                let mut pre = first_data;
                match status & 0xf0 {
                    0x80 => {
                        let pitch = data(r, &mut pre)?;
                        data(r, &mut pre)?;
                        events.push((tick, RawEvent::NoteOff { channel, pitch }));
                    }
                    0x90 => {
                        let pitch = data(r, &mut pre)?;
                        let velocity = data(r, &mut pre)?;
                        let ev = if velocity == 0 {
                            RawEvent::NoteOff { channel, pitch }
                        } else {
                            RawEvent::NoteOn { channel, pitch, velocity }
                        };
                        events.push((tick, ev));
                    }
                    0xc0 | 0xd0 => {
                        data(r, &mut pre)?;
                    }
                    _ => {
                        data(r, &mut pre)?;
                        data(r, &mut pre)?;
                    }
                }
            }
            _ => return r.err(format!("unsupported status byte {status:#04x}")),
        }
    }
    if r.pos != end {
        r.pos = end.min(r.pos);
        return r.err("track events overrun chunk length");
    }
    Ok(Track { events, end_tick: tick })
}

/// Parses a format 0 or 1 Standard MIDI File into a quantized piece. Onsets
/// snap to the nearest sixteenth step; tracks and channels are merged.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiPiece> {
    let report = parse_midi_report(bytes)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report.piece)
}

pub fn parse_midi_report(bytes: &[u8]) -> Result<MidiReport> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != b"MThd" {
        r.pos = 0;
        return r.err("missing MThd header");
    }
    let header_len = r.u32()? as usize;
    if header_len < 6 {
        return r.err("header chunk shorter than 6 bytes");
    }
    let format = r.u16()?;
    let ntracks = r.u16()?;
    let division = r.u16()?;
    r.take(header_len - 6)?;
    if format > 1 {
        r.pos = 8;
        return r.err(format!("unsupported MIDI format {format}"));
    }
    if division & 0x8000 != 0 || division == 0 {
        r.pos = 12;
        return r.err("SMPTE or zero time division is not supported");
    }
    let tpq = division as f64;
    let step_ticks = tpq / 4.0;
    let thirty_second_ticks = tpq / 8.0;

    let mut tracks = Vec::with_capacity(ntracks as usize);
    for _ in 0..ntracks {
        // skip foreign chunks between tracks
        while r.pos + 8 <= bytes.len() && &bytes[r.pos..r.pos + 4] != b"MTrk" {
            r.take(4)?;
            let len = r.u32()? as usize;
            r.take(len)?;
        }
        tracks.push(read_track(&mut r)?);
    }

    let mut warnings = Vec::new();
    let mut notes = Vec::new();
    let mut tempo_changes = Vec::new();
    let mut end_tick = 0u64;
    let step_of = |tick: u64| (tick as f64 / step_ticks).round() as u32;

    for (ti, track) in tracks.iter().enumerate() {
        end_tick = end_tick.max(track.end_tick);
        let mut open: HashMap<(u8, u8), Vec<(u64, u8)>> = HashMap::new();
        let close = |on: u64, off: u64, pitch: u8, velocity: u8, notes: &mut Vec<Note>| {
            let duration = (((off - on) as f64 / thirty_second_ticks).round() as u32).max(1);
            notes.push(Note { onset: step_of(on), pitch, velocity, duration });
        };
        for (tick, ev) in &track.events {
            match *ev {
                RawEvent::NoteOn { channel, pitch, velocity } => {
                    open.entry((channel, pitch)).or_default().push((*tick, velocity));
                }
                RawEvent::NoteOff { channel, pitch } => {
                    if let Some(stack) = open.get_mut(&(channel, pitch)) {
                        if !stack.is_empty() {
                            let (on, velocity) = stack.remove(0);
                            close(on, *tick, pitch, velocity, &mut notes);
                        }
                    }
                }
                RawEvent::Tempo(uspq) => tempo_changes.push(TempoChange { onset: step_of(*tick), bpm: 60_000_000.0 / uspq as f64 }),
            }
        }
        let mut unresolved: Vec<_> = open.into_iter().flat_map(|((_, p), v)| v.into_iter().map(move |x| (p, x))).collect();
        unresolved.sort();
        for (pitch, (on, velocity)) in unresolved {
            warnings.push(format!("track {ti}: note-on pitch {pitch} at tick {on} never released; closed at track end"));
            close(on, track.end_tick.max(on), pitch, velocity, &mut notes);
        }
    }
    Ok(MidiReport { piece: MidiPiece::new(notes, tempo_changes, step_of(end_tick)), warnings })
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = (value & 0x7f) as u8 | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Writes a format 0 file at 480 ticks per quarter with one track holding
/// tempo meta events and channel-0 notes.
pub fn write_midi(piece: &MidiPiece) -> Vec<u8> {
    let step_ticks = (OUTPUT_TICKS_PER_QUARTER / 4) as u64;
    let thirty_second_ticks = (OUTPUT_TICKS_PER_QUARTER / 8) as u64;

    // (tick, order, bytes): note-offs sort before tempo and note-ons at one tick
    let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::new();
    for t in &piece.tempo_changes {
        let uspq = (60_000_000.0 / t.bpm).round().clamp(1.0, 0xff_ffff as f64) as u32;
        let b = uspq.to_be_bytes();
        events.push((t.onset as u64 * step_ticks, 1, vec![0xff, 0x51, 0x03, b[1], b[2], b[3]]));
    }
    for n in &piece.notes {
        let on = n.onset as u64 * step_ticks;
        let off = on + n.duration as u64 * thirty_second_ticks;
        events.push((on, 2, vec![0x90, n.pitch, n.velocity.clamp(1, 127)]));
        events.push((off, 0, vec![0x80, n.pitch, 0]));
    }
    events.sort_by_key(|e| (e.0, e.1));

    let end_tick = events.iter().map(|e| e.0).max().unwrap_or(0).max(piece.end_step as u64 * step_ticks);

    let mut track = Vec::new();
    let mut now = 0u64;
    for (tick, _, bytes) in &events {
        push_vlq(&mut track, (tick - now) as u32);
        track.extend_from_slice(bytes);
        now = *tick;
    }
    push_vlq(&mut track, (end_tick - now) as u32);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&(OUTPUT_TICKS_PER_QUARTER as u16).to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smf(tpq: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&(if tracks.len() > 1 { 1u16 } else { 0 }).to_be_bytes());
        out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
        out.extend_from_slice(&tpq.to_be_bytes());
        for t in tracks {
            out.extend_from_slice(b"MTrk");
            out.extend_from_slice(&(t.len() as u32).to_be_bytes());
            out.extend_from_slice(t);
        }
        out
    }

    #[test]
    fn single_quarter_note() {
        // note-on at 0, note-off one quarter (96 ticks) later
        let track = vec![0x00, 0x90, 60, 64, 0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00];
        let p = parse_midi(&smf(96, &[track])).unwrap();
        assert_eq!(p.notes, vec![Note { onset: 0, pitch: 60, velocity: 64, duration: 8 }]);
        assert_eq!(p.end_step, 4);
    }

    #[test]
    fn empty_track() {
        let p = parse_midi(&smf(480, &[vec![0x00, 0xff, 0x2f, 0x00]])).unwrap();
        assert!(p.notes.is_empty());
        assert_eq!(p.end_step, 0);
    }

    #[test]
    fn velocity_zero_is_note_off_and_running_status() {
        // running status: second and third events reuse 0x90
        let track = vec![0x00, 0x90, 60, 100, 0x83, 0x60, 60, 0, 0x00, 64, 90, 0x83, 0x60, 64, 0, 0x00, 0xff, 0x2f, 0x00];
        let p = parse_midi(&smf(480, &[track])).unwrap();
        assert_eq!(p.notes.len(), 2);
        assert_eq!(p.notes[0].duration, 8);
        assert_eq!(p.notes[1].onset, 4);
        assert_eq!(p.notes[1].velocity, 90);
    }

    #[test]
    fn tracks_merge_and_tempo() {
        let tempo = vec![0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, 0x00, 0xff, 0x2f, 0x00];
        let notes = vec![0x00, 0x91, 67, 80, 0x83, 0x60, 0x81, 67, 0, 0x00, 0xff, 0x2f, 0x00];
        let p = parse_midi(&smf(480, &[tempo, notes])).unwrap();
        assert_eq!(p.tempo_changes, vec![TempoChange { onset: 0, bpm: 120.0 }]);
        assert_eq!(p.notes[0].pitch, 67);
        assert_eq!(p.notes[0].duration, 8);
    }

    #[test]
    fn unresolved_note_is_closed_with_warning() {
        let track = vec![0x00, 0x90, 60, 64, 0x83, 0x60, 0xff, 0x2f, 0x00];
        let report = parse_midi_report(&smf(480, &[track])).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.piece.notes[0].duration, 8);
    }

    #[test]
    fn malformed_reports_offset() {
        match parse_midi(b"MThd\0\0\0\x06\0\0\0\x01\x01\xe0MTrk\0\0\0\x10\x00\x90") {
            Err(Error::MalformedMidi { offset, .. }) => assert!(offset >= 22),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_midi(b"RIFF"), Err(Error::MalformedMidi { offset: 0, .. })));
    }

    #[test]
    fn write_then_parse() {
        let p = MidiPiece::new(
            vec![Note { onset: 0, pitch: 60, velocity: 64, duration: 8 }, Note { onset: 2, pitch: 62, velocity: 100, duration: 3 }],
            vec![TempoChange { onset: 0, bpm: 100.0 }, TempoChange { onset: 3, bpm: 140.0 }],
            6,
        );
        let q = parse_midi(&write_midi(&p)).unwrap();
        assert_eq!(q.notes, p.notes);
        assert_eq!(q.end_step, 6);
        assert_eq!(q.tempo_changes.len(), 2);
        assert!((q.tempo_changes[1].bpm - 140.0).abs() < 1e-3);
    }

    #[test]
    fn vlq_encoding() {
        let mut out = Vec::new();
        push_vlq(&mut out, 0x0fff_ffff);
        assert_eq!(out, vec![0xff, 0xff, 0xff, 0x7f]);
        let mut r = Reader { bytes: &out, pos: 0 };
        assert_eq!(r.vlq().unwrap(), 0x0fff_ffff);
    }
}
