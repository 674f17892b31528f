use serde::{Deserialize, Serialize};

use super::{Note, Override, Score, NOTE_VELOCITY};
use crate::error::{Error, Result};

pub const TICKS_PER_QUARTER: u16 = 480;

const PROVENANCE_PREFIX: &str = "songsmith:";
const NOTE_OFF_VELOCITY: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MidiEventKind {
    NoteOn {
        channel: u8,
        key: u8,
        velocity: u8,
    },
    NoteOff {
        channel: u8,
        key: u8,
        velocity: u8,
    },
    /// Microseconds per quarter note.
    Tempo(u32),
    Lyric(String),
    Text(String),
    EndOfTrack,
    Meta {
        kind: u8,
        data: Vec<u8>,
    },
    Channel {
        status: u8,
        data: Vec<u8>,
    },
    SysEx(Vec<u8>),
}

/// An event at an absolute tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiEvent {
    pub tick: u64,
    pub kind: MidiEventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MidiFile {
    pub format: u16,
    pub ticks_per_quarter: u16,
    pub events: Vec<MidiEvent>,
}

/// Score metadata that MIDI has no native slot for, stored in a text event.
#[derive(Serialize, Deserialize)]
struct Provenance {
    id: String,
    seed: u64,
    tempo_bpm: f64,
    overrides: Vec<Override>,
}

fn ticks(quarters: f64) -> u64 {
    (quarters * TICKS_PER_QUARTER as f64).round() as u64
}

fn tempo_micros(bpm: f64) -> u32 {
    (60_000_000.0 / bpm).round().clamp(1.0, 0xFF_FFFF as f64) as u32
}

/// The event list [`write_midi`] serializes.
pub fn score_events(score: &Score) -> Vec<MidiEvent> {
    let provenance = Provenance {
        id: score.id.clone(),
        seed: score.seed,
        tempo_bpm: score.tempo_bpm,
        overrides: score.overrides.clone(),
    };
    let text = format!(
        "{PROVENANCE_PREFIX}{}",
        serde_json::to_string(&provenance).expect("plain data")
    );
    let mut events = vec![
        MidiEvent {
            tick: 0,
            kind: MidiEventKind::Text(text),
        },
        MidiEvent {
            tick: 0,
            kind: MidiEventKind::Tempo(tempo_micros(score.tempo_bpm)),
        },
    ];
    let mut t = 0;
    for (syl, note) in score.syllables.iter().zip(&score.notes) {
        t += ticks(note.rest_before);
        events.push(MidiEvent {
            tick: t,
            kind: MidiEventKind::Lyric(syl.clone()),
        });
        events.push(MidiEvent {
            tick: t,
            kind: MidiEventKind::NoteOn {
                channel: 0,
                key: note.pitch,
                velocity: NOTE_VELOCITY,
            },
        });
        t += ticks(note.duration);
        events.push(MidiEvent {
            tick: t,
            kind: MidiEventKind::NoteOff {
                channel: 0,
                key: note.pitch,
                velocity: NOTE_OFF_VELOCITY,
            },
        });
    }
    events.push(MidiEvent {
        tick: t,
        kind: MidiEventKind::EndOfTrack,
    });
    events
}

pub fn write_vlq(mut v: u32, out: &mut Vec<u8>) {
    let mut buf = [0u8; 5];
    let mut n = 0;
    loop {
        buf[n] = (v & 0x7F) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

fn write_meta(kind: u8, data: &[u8], out: &mut Vec<u8>) {
    out.extend([0xFF, kind]);
    write_vlq(data.len() as u32, out);
    out.extend_from_slice(data);
}

/// Format-0 Standard MIDI File at 480 ticks per quarter note.
pub fn write_midi(score: &Score) -> Vec<u8> {
    let mut track = Vec::new();
    let mut last = 0;
    for ev in score_events(score) {
        write_vlq((ev.tick - last) as u32, &mut track);
        last = ev.tick;
        match &ev.kind {
            MidiEventKind::NoteOn { channel, key, velocity } => track.extend([0x90 | channel, *key, *velocity]),
            MidiEventKind::NoteOff { channel, key, velocity } => track.extend([0x80 | channel, *key, *velocity]),
            MidiEventKind::Tempo(us) => write_meta(0x51, &us.to_be_bytes()[1..], &mut track),
            MidiEventKind::Lyric(s) => write_meta(0x05, s.as_bytes(), &mut track),
            MidiEventKind::Text(s) => write_meta(0x01, s.as_bytes(), &mut track),
            MidiEventKind::EndOfTrack => write_meta(0x2F, &[], &mut track),
            MidiEventKind::Meta { kind, data } => write_meta(*kind, data, &mut track),
            MidiEventKind::Channel { status, data } => {
                track.push(*status);
                track.extend(data);
            }
            MidiEventKind::SysEx(data) => {
                track.push(0xF0);
                write_vlq(data.len() as u32, &mut track);
                track.extend(data);
            }
        }
    }
    let mut out = Vec::with_capacity(22 + track.len());
    out.extend(b"MThd");
    out.extend(6u32.to_be_bytes());
    out.extend(0u16.to_be_bytes());
    out.extend(1u16.to_be_bytes());
    out.extend(TICKS_PER_QUARTER.to_be_bytes());
    out.extend(b"MTrk");
    out.extend((track.len() as u32).to_be_bytes());
    out.extend(track);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Midi(format!(
                "truncated: need {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn byte(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let (v, used) = read_vlq(&self.bytes[self.pos..])?;
        self.pos += used;
        Ok(v)
    }
}

/// Decodes a variable-length quantity; returns the value and bytes consumed.
pub fn read_vlq(bytes: &[u8]) -> Result<(u32, usize)> {
    let mut v: u32 = 0;
    for i in 0..4 {
        let b = *bytes
            .get(i)
            .ok_or_else(|| Error::Midi("truncated: variable-length quantity".into()))?;
        v = (v << 7) | (b & 0x7F) as u32;
        if b & 0x80 == 0 {
            return Ok((v, i + 1));
        }
    }
    Err(Error::Midi(
        "overlong variable-length quantity (more than 4 bytes)".into(),
    ))
}

fn data_len(status: u8) -> usize {
    match status & 0xF0 {
        0xC0 | 0xD0 => 1,
        _ => 2,
    }
}

/// Parses a format-0 Standard MIDI File into absolute-time events.
pub fn read_midi(bytes: &[u8]) -> Result<MidiFile> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "header magic")? != b"MThd" {
        return Err(Error::Midi("bad magic: file does not start with MThd".into()));
    }
    let header_len = c.u32("header length")?;
    if header_len < 6 {
        return Err(Error::Midi(format!("header length {header_len} is shorter than 6")));
    }
    let format = c.u16("format")?;
    let tracks = c.u16("track count")?;
    let division = c.u16("division")?;
    c.take(header_len as usize - 6, "header padding")?;
    if format != 0 || tracks != 1 {
        return Err(Error::Midi(format!(
            "unsupported layout: format {format} with {tracks} tracks"
        )));
    }
    if division & 0x8000 != 0 {
        return Err(Error::Midi("SMPTE time division is not supported".into()));
    }
    if c.take(4, "track magic")? != b"MTrk" {
        return Err(Error::Midi("bad magic: missing MTrk chunk".into()));
    }
    let len = c.u32("track length")? as usize;
    let body = c.take(len, "track body")?;
    let mut t = Cursor { bytes: body, pos: 0 };

    let mut events = Vec::new();
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    while t.pos < body.len() {
        tick += t.vlq()? as u64;
        let first = t.byte("event status")?;
        let kind = match first {
            0xFF => {
                let kind = t.byte("meta type")?;
                let n = t.vlq()? as usize;
                let data = t.take(n, "meta data")?;
                let text = || String::from_utf8_lossy(data).into_owned();
                match kind {
                    0x51 if n == 3 => MidiEventKind::Tempo(u32::from_be_bytes([0, data[0], data[1], data[2]])),
                    0x05 => MidiEventKind::Lyric(text()),
                    0x01 => MidiEventKind::Text(text()),
                    0x2F => MidiEventKind::EndOfTrack,
                    _ => MidiEventKind::Meta {
                        kind,
                        data: data.to_vec(),
                    },
                }
            }
            0xF0 | 0xF7 => {
                let n = t.vlq()? as usize;
                MidiEventKind::SysEx(t.take(n, "sysex data")?.to_vec())
            }
            _ => {
                let (status, data) = if first & 0x80 != 0 {
                    running = Some(first);
                    (first, t.take(data_len(first), "channel data")?.to_vec())
                } else {
                    let status = running.ok_or_else(|| Error::Midi("data byte without running status".into()))?;
                    let mut data = vec![first];
                    data.extend(t.take(data_len(status) - 1, "channel data")?);
                    (status, data)
                };
                let channel = status & 0x0F;
                match status & 0xF0 {
                    0x90 if data[1] > 0 => MidiEventKind::NoteOn {
                        channel,
                        key: data[0],
                        velocity: data[1],
                    },
                    0x90 | 0x80 => MidiEventKind::NoteOff {
                        channel,
                        key: data[0],
                        velocity: data[1],
                    },
                    _ => MidiEventKind::Channel { status, data },
                }
            }
        };
        let end = kind == MidiEventKind::EndOfTrack;
        events.push(MidiEvent { tick, kind });
        if end {
            break;
        }
    }
    Ok(MidiFile {
        format,
        ticks_per_quarter: division,
        events,
    })
}

/// Rebuilds a score from a monophonic file with one lyric per note.
pub fn score_from_midi(file: &MidiFile) -> Result<Score> {
    let tpq = file.ticks_per_quarter as f64;
    let mut score = Score {
        id: String::new(),
        syllables: Vec::new(),
        notes: Vec::new(),
        tempo_bpm: super::DEFAULT_TEMPO_BPM,
        seed: 0,
        overrides: Vec::new(),
    };
    let mut provenance: Option<Provenance> = None;
    let mut lyric: Option<String> = None;
    let mut open: Option<(u64, u8)> = None;
    let mut last_off: u64 = 0;
    for ev in &file.events {
        match &ev.kind {
            MidiEventKind::Text(s) => {
                if let Some(json) = s.strip_prefix(PROVENANCE_PREFIX) {
                    provenance = serde_json::from_str(json).ok();
                }
            }
            MidiEventKind::Tempo(us) => score.tempo_bpm = 60_000_000.0 / *us as f64,
            MidiEventKind::Lyric(s) => lyric = Some(s.clone()),
            MidiEventKind::NoteOn { key, .. } => {
                if open.is_some() {
                    return Err(Error::Midi(format!("overlapping notes at tick {}", ev.tick)));
                }
                open = Some((ev.tick, *key));
            }
            MidiEventKind::NoteOff { key, .. } => {
                let (start, pitch) = open
                    .take()
                    .filter(|(_, k)| k == key)
                    .ok_or_else(|| Error::Midi(format!("unmatched note-off at tick {}", ev.tick)))?;
                score.syllables.push(lyric.take().unwrap_or_default());
                score.notes.push(Note {
                    pitch,
                    duration: (ev.tick - start) as f64 / tpq,
                    rest_before: (start - last_off) as f64 / tpq,
                });
                last_off = ev.tick;
            }
            _ => {}
        }
    }
    if let Some(p) = provenance {
        score.id = p.id;
        score.seed = p.seed;
        score.tempo_bpm = p.tempo_bpm;
        score.overrides = p.overrides;
    }
    Ok(score)
}
