//! Line-oriented slot trace: `time_us, event, winner_node|-1, n_nonempty`.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotEvent {
    Idle,
    Success,
    Collision,
}

impl SlotEvent {
    fn code(self) -> char {
        match self {
            SlotEvent::Idle => 'I',
            SlotEvent::Success => 'S',
            SlotEvent::Collision => 'C',
        }
    }
}

/// One slot as written to a trace file. `time_us` is the slot start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time_us: f64,
    pub event: SlotEvent,
    pub winner: Option<u32>,
    pub n_nonempty: u32,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let winner = self.winner.map_or(-1, i64::from);
        write!(f, "{:.3},{},{},{}", self.time_us, self.event.code(), winner, self.n_nonempty)
    }
}

impl FromStr for TraceRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self, Error> {
        let bad = || Error::Config(format!("malformed trace line `{line}`"));
        let mut it = line.split(',').map(str::trim);
        let mut next = || it.next().ok_or_else(bad);
        let time_us = next()?.parse().map_err(|_| bad())?;
        let event = match next()? {
            "I" => SlotEvent::Idle,
            "S" => SlotEvent::Success,
            "C" => SlotEvent::Collision,
            _ => return Err(bad()),
        };
        let winner: i64 = next()?.parse().map_err(|_| bad())?;
        let n_nonempty = next()?.parse().map_err(|_| bad())?;
        let winner = if winner < 0 { None } else { Some(u32::try_from(winner).map_err(|_| bad())?) };
        Ok(TraceRecord { time_us, event, winner, n_nonempty })
    }
}
