//! Real-time self-testing over tumbling windows of a round stream.

use serde::Serialize;

use crate::certify::{pass_test, witness_value};
use crate::error::{invalid, Result};
use crate::model::{counts_to_frequencies, CorrelationCounts, EnergyBounds, RoundRecord, WitnessCertificate};

pub const MIN_WINDOW: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowVerdict {
    pub index: u64,
    /// First round of the window.
    pub start: u64,
    pub len: u64,
    pub witness_value: f64,
    pub passed: bool,
    /// False for a trailing window cut short by the end of the stream.
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alarm {
    pub window: u64,
    pub start: u64,
    /// Round at which the alarm was raised (last round of the window).
    pub raised_at: u64,
    pub witness_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum MonitorEvent {
    Window(WindowVerdict),
    Alarm(Alarm),
}

/// Push-based monitor: feed rounds one at a time, receive a verdict the
/// moment each window closes.
#[derive(Debug, Clone)]
pub struct Monitor {
    cert: WitnessCertificate,
    omega: EnergyBounds,
    window: u64,
    counts: CorrelationCounts,
    start: u64,
    index: u64,
    alarmed: bool,
}

impl Monitor {
    pub fn new(cert: WitnessCertificate, omega: EnergyBounds, window: u64) -> Result<Self> {
        if window < MIN_WINDOW {
            return Err(invalid("window", format!("must be at least {MIN_WINDOW} rounds")));
        }
        let cert = cert.validate()?;
        Ok(Self {
            cert,
            omega,
            window,
            counts: CorrelationCounts::default(),
            start: 0,
            index: 0,
            alarmed: false,
        })
    }

    fn close(&mut self, complete: bool, events: &mut Vec<MonitorEvent>) -> Result<()> {
        let freqs = counts_to_frequencies(&self.counts)?;
        let value = witness_value(&freqs.joint, &self.omega, &self.cert)?;
        let verdict = WindowVerdict {
            index: self.index,
            start: self.start,
            len: self.counts.n_total(),
            witness_value: value,
            passed: pass_test(value, &self.cert),
            complete,
        };
        events.push(MonitorEvent::Window(verdict));
        // Partial windows are reported but never raise the alarm.
        if complete && !verdict.passed && !self.alarmed {
            self.alarmed = true;
            events.push(MonitorEvent::Alarm(Alarm {
                window: verdict.index,
                start: verdict.start,
                raised_at: verdict.start + verdict.len - 1,
                witness_value: value,
            }));
        }
        self.start += self.counts.n_total();
        self.index += 1;
        self.counts = CorrelationCounts::default();
        Ok(())
    }

    /// Records a round; returns events when it closes a window.
    pub fn push(&mut self, round: RoundRecord) -> Result<Vec<MonitorEvent>> {
        self.counts.record(round);
        let mut events = Vec::new();
        if self.counts.n_total() == self.window {
            self.close(true, &mut events)?;
        }
        Ok(events)
    }

    /// Flushes a trailing partial window, if any.
    pub fn finish(mut self) -> Result<Vec<MonitorEvent>> {
        let mut events = Vec::new();
        if self.counts.n_total() > 0 {
            self.close(false, &mut events)?;
        }
        Ok(events)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MonitorReport {
    pub windows: Vec<WindowVerdict>,
    pub alarm: Option<Alarm>,
}

impl MonitorReport {
    pub fn all_passed(&self) -> bool {
        self.windows.iter().all(|w| w.passed)
    }
}

/// Runs the monitor over a whole stream.
pub fn monitor<I>(stream: I, cert: &WitnessCertificate, omega: &EnergyBounds, window: u64) -> Result<MonitorReport>
where
    I: IntoIterator<Item = Result<RoundRecord>>,
{
    let mut m = Monitor::new(cert.clone(), *omega, window)?;
    let mut report = MonitorReport::default();
    let absorb = |events: Vec<MonitorEvent>, report: &mut MonitorReport| {
        for e in events {
            match e {
                MonitorEvent::Window(w) => report.windows.push(w),
                MonitorEvent::Alarm(a) => report.alarm = Some(a),
            }
        }
    };
    for r in stream {
        let events = m.push(r?)?;
        absorb(events, &mut report);
    }
    absorb(m.finish()?, &mut report);
    Ok(report)
}
