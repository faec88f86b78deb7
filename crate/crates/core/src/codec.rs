//! Spike trains: the grouped test patterns, Poisson rate coding of images,
//! rate decoding and raster serialization.

use std::io::Write;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::neuron::{presets::Preset, simulate_neuron};
use crate::{rng, Error, Result};

/// Sorted event times (seconds) on one channel.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub channel_id: u32,
    times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(channel_id: u32, times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParams(
                "spike times must be finite and >= 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "spike times must be strictly increasing".into(),
            ));
        }
        Ok(Self { channel_id, times })
    }

    pub fn empty(channel_id: u32) -> Self {
        Self {
            channel_id,
            times: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Copy with every time multiplied by `factor`.
    pub fn dilate(&self, factor: f64) -> Self {
        Self {
            channel_id: self.channel_id,
            times: self.times.iter().map(|t| t * factor).collect(),
        }
    }
}

/// Groups of evenly spaced spikes separated by silent guard intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPattern {
    pub group_sizes: Vec<usize>,
    #[serde(rename = "intra_group_rate_hz")]
    pub intra_group_rate: f64,
    /// Interval between the last spike of one group and the first of the next.
    #[serde(rename = "guard_time_s")]
    pub guard_time: f64,
    #[serde(rename = "spike_width_s")]
    pub spike_width: f64,
}

impl GroupPattern {
    /// 14/5/3/1 groups at 1 kHz with a 30 ms guard.
    pub fn standard() -> Self {
        Self {
            group_sizes: vec![14, 5, 3, 1],
            intra_group_rate: 1e3,
            guard_time: 30e-3,
            spike_width: 0.5e-3,
        }
    }

    /// The same groups ten times faster: 10 kHz with a 3 ms guard.
    pub fn fast() -> Self {
        Self::standard().scale_time(0.1)
    }

    pub fn scale_time(&self, factor: f64) -> Self {
        Self {
            group_sizes: self.group_sizes.clone(),
            intra_group_rate: self.intra_group_rate / factor,
            guard_time: self.guard_time * factor,
            spike_width: self.spike_width * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(Error::InvalidParams(
                "group sizes must be nonempty and positive".into(),
            ));
        }
        if !(self.intra_group_rate > 0.0) {
            return Err(Error::InvalidParams("intra-group rate must be > 0".into()));
        }
        if !(self.guard_time > 1.0 / self.intra_group_rate) {
            return Err(Error::InvalidParams(
                "guard time must exceed the intra-group spike interval".into(),
            ));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.intra_group_rate
    }

    /// Time of spike `i` in group `g`.
    pub fn spike_time(&self, g: usize, i: usize) -> f64 {
        self.group_start(g) + i as f64 * self.period()
    }

    pub fn group_start(&self, g: usize) -> f64 {
        let mut t = 0.0;
        for &n in &self.group_sizes[..g] {
            t += (n - 1) as f64 * self.period() + self.guard_time;
        }
        t
    }

    /// Time just after the final spike's pulse.
    pub fn end_time(&self) -> f64 {
        let last = self.group_sizes.len() - 1;
        self.spike_time(last, self.group_sizes[last] - 1) + self.period()
    }

    /// `[start, next start)` per group; the last window closes at `end`.
    pub fn group_windows(&self, end: f64) -> Vec<(f64, f64)> {
        let n = self.group_sizes.len();
        (0..n)
            .map(|g| {
                let b = if g + 1 < n {
                    self.group_start(g + 1)
                } else {
                    end
                };
                (self.group_start(g), b)
            })
            .collect()
    }

    fn group_of_time(&self, t: f64) -> usize {
        let n = self.group_sizes.len();
        (1..n).take_while(|&g| self.group_start(g) <= t).count()
    }
}

pub fn build_group_pattern(gp: &GroupPattern) -> Result<SpikeTrain> {
    gp.validate()?;
    let mut times = Vec::with_capacity(gp.group_sizes.iter().sum());
    for (g, &n) in gp.group_sizes.iter().enumerate() {
        for i in 0..n {
            times.push(gp.spike_time(g, i));
        }
    }
    SpikeTrain::new(0, times)
}

/// Inhibitory train that cancels the listed output events (1-based).
///
/// The events are the output spikes of `neuron` driven by the excitatory
/// pattern alone. For each suppressed event, inhibitory spikes are co-timed
/// with every excitatory spike of the same group that arrived after the
/// previous event and no later than the event itself; for the last event of
/// a group, with every remaining spike of that group.
pub fn build_fig6_inhibitory_pattern(
    base: &GroupPattern,
    suppress_events: &[usize],
    neuron: &Preset,
) -> Result<SpikeTrain> {
    let exc = build_group_pattern(base)?;
    if suppress_events.is_empty() {
        return Ok(SpikeTrain::empty(1));
    }
    let stim = neuron.stimulus_for(base, base.end_time() + base.guard_time);
    let params = neuron.params_for_rate(base.intra_group_rate)?;
    let trace = simulate_neuron(&exc, &SpikeTrain::empty(1), &params, &stim)?;
    let events = &trace.output_spikes;

    let mut times = Vec::new();
    let mut wanted: Vec<usize> = suppress_events.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    for &e in &wanted {
        if e == 0 || e > events.len() {
            return Err(Error::UnknownEvent(e));
        }
        let t_event = events[e - 1];
        let group = base.group_of_time(t_event);
        let lo = if e >= 2 {
            events[e - 2]
        } else {
            f64::NEG_INFINITY
        };
        let lo = lo.max(base.group_start(group) - 0.5 * base.period());
        // Without the event's refractory period the rest of the group would
        // build a new event, so it is inhibited too unless another event of
        // the same group follows.
        let last_in_group = events
            .get(e)
            .is_none_or(|&t| base.group_of_time(t) != group);
        let hi = if last_in_group {
            f64::INFINITY
        } else {
            t_event
        };
        times.extend(
            exc.times()
                .iter()
                .copied()
                .filter(|&t| t > lo && t <= hi && base.group_of_time(t) == group),
        );
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    SpikeTrain::new(1, times)
}

/// For each `baseline` event, whether `observed` still has a spike within
/// `tolerance` of it. Each observed spike matches at most one event.
pub fn surviving_events(baseline: &[f64], observed: &[f64], tolerance: f64) -> Vec<bool> {
    let mut used = vec![false; observed.len()];
    baseline
        .iter()
        .map(|&t| {
            let hit = observed
                .iter()
                .enumerate()
                .filter(|&(k, &o)| !used[k] && (o - t).abs() <= tolerance)
                .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
                .map(|(k, _)| k);
            if let Some(k) = hit {
                used[k] = true;
            }
            hit.is_some()
        })
        .collect()
}

/// Rate-coding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Rate of a fully saturated pixel.
    #[serde(rename = "max_rate_hz")]
    pub max_rate: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub seed: u64,
    /// Extra multiplier applied to every pixel's rate.
    #[serde(default = "one")]
    pub intensity_scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Independent homogeneous Poisson train per pixel, rate = intensity x max rate.
pub fn poisson_encode(image: &[f64], cfg: &EncodingConfig) -> Result<Vec<SpikeTrain>> {
    if !(cfg.max_rate > 0.0 && cfg.duration > 0.0) {
        return Err(Error::InvalidParams(
            "max rate and duration must be > 0".into(),
        ));
    }
    let mut rng = rng::seeded(cfg.seed);
    image
        .iter()
        .enumerate()
        .map(|(ch, &x)| {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidParams(format!("pixel {ch} outside [0, 1]")));
            }
            let rate = x * cfg.max_rate * cfg.intensity_scale;
            Ok(SpikeTrain {
                channel_id: ch as u32,
                times: poisson_times(&mut rng, rate, cfg.duration),
            })
        })
        .collect()
}

pub(crate) fn poisson_times(rng: &mut rng::Rng, rate: f64, duration: f64) -> Vec<f64> {
    let mut times = Vec::new();
    if rate <= 0.0 {
        return times;
    }
    let mut t = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap / rate;
        if t >= duration {
            break;
        }
        if times.last().is_none_or(|&last| t > last) {
            times.push(t);
        }
    }
    times
}

/// Class whose channels have the highest mean count; ties go to the lowest
/// class index. `labels[ch]` is the class of channel `ch`.
pub fn rate_decode(counts: &[u32], labels: &[usize]) -> Result<usize> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelMap);
    }
    if counts.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} counts for {} labelled channels",
            counts.len(),
            labels.len()
        )));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![0.0f64; n_classes];
    let mut n = vec![0usize; n_classes];
    for (&c, &l) in counts.iter().zip(labels) {
        sum[l] += c as f64;
        n[l] += 1;
    }
    let mut best: Option<(usize, f64)> = None;
    for class in 0..n_classes {
        if n[class] == 0 {
            continue;
        }
        let mean = sum[class] / n[class] as f64;
        if best.is_none_or(|(_, m)| mean > m) {
            best = Some((class, mean));
        }
    }
    Ok(best.map(|(c, _)| c).unwrap_or(0))
}

/// Index of the largest count, lowest index on ties.
pub fn argmax_count(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// One event of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterEvent {
    pub channel_id: u32,
    pub time_s: f64,
}

/// Events of all trains ordered by time, then channel.
pub fn raster_events(trains: &[SpikeTrain]) -> Vec<RasterEvent> {
    let mut ev: Vec<RasterEvent> = trains
        .iter()
        .flat_map(|tr| {
            tr.times().iter().map(move |&t| RasterEvent {
                channel_id: tr.channel_id,
                time_s: t,
            })
        })
        .collect();
    ev.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then(a.channel_id.cmp(&b.channel_id))
    });
    ev
}

/// CSV raster with header `channel_id,time_s`.
pub fn write_raster_csv<W: Write>(trains: &[SpikeTrain], mut w: W) -> std::io::Result<()> {
    writeln!(w, "channel_id,time_s")?;
    for e in raster_events(trains) {
        writeln!(w, "{},{:e}", e.channel_id, e.time_s)?;
    }
    Ok(())
}

/// JSON event list `{"events": [{"channel_id": .., "time_s": ..}, ..]}`.
pub fn raster_json(trains: &[SpikeTrain]) -> serde_json::Value {
    serde_json::json!({ "events": raster_events(trains) })
}

/// Rebuild per-channel trains from an event list.
pub fn trains_from_events(events: &[RasterEvent], channels: usize) -> Result<Vec<SpikeTrain>> {
    let mut times = vec![Vec::new(); channels];
    for e in events {
        let ch = e.channel_id as usize;
        if ch >= channels {
            return Err(Error::ShapeMismatch(format!("channel {ch} >= {channels}")));
        }
        times[ch].push(e.time_s);
    }
    times
        .into_iter()
        .enumerate()
        .map(|(ch, mut t)| {
            t.sort_by(f64::total_cmp);
            SpikeTrain::new(ch as u32, t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_pattern_structure() {
        let gp = GroupPattern::standard();
        let tr = build_group_pattern(&gp).unwrap();
        assert_eq!(tr.len(), 23);
        assert_eq!(tr.times()[0], 0.0);
        // last group is a single spike preceded by the guard interval
        let t = tr.times();
        assert!((t[22] - t[21] - gp.guard_time).abs() < 1e-12);
        assert!((t[1] - t[0] - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn single_spike_group() {
        let gp = GroupPattern {
            group_sizes: vec![1],
            intra_group_rate: 123.0,
            guard_time: 1.0,
            spike_width: 1e-3,
        };
        assert_eq!(build_group_pattern(&gp).unwrap().times(), &[0.0]);
    }

    #[test]
    fn fast_pattern_is_compressed() {
        let slow = build_group_pattern(&GroupPattern::standard()).unwrap();
        let fast = build_group_pattern(&GroupPattern::fast()).unwrap();
        assert_eq!(slow.len(), fast.len());
        for (a, b) in slow.times().iter().zip(fast.times()) {
            assert!((a * 0.1 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pattern_validation() {
        let mut gp = GroupPattern::standard();
        gp.guard_time = 0.5e-3;
        assert!(build_group_pattern(&gp).is_err());
        gp = GroupPattern::standard();
        gp.group_sizes = vec![];
        assert!(build_group_pattern(&gp).is_err());
    }

    #[test]
    fn spike_train_rejects_unsorted() {
        assert!(SpikeTrain::new(0, vec![0.1, 0.1]).is_err());
        assert!(SpikeTrain::new(0, vec![-0.1]).is_err());
    }

    #[test]
    fn zero_image_is_silent() {
        let cfg = EncodingConfig {
            max_rate: 100.0,
            duration: 1.0,
            seed: 3,
            intensity_scale: 1.0,
        };
        let trains = poisson_encode(&[0.0; 16], &cfg).unwrap();
        assert!(trains.iter().all(SpikeTrain::is_empty));
    }

    #[test]
    fn poisson_rate_within_three_sigma() {
        let cfg = EncodingConfig {
            max_rate: 100.0,
            duration: 10.0,
            seed: 11,
            intensity_scale: 1.0,
        };
        for seed in 0..5 {
            let trains = poisson_encode(&[1.0], &EncodingConfig { seed, ..cfg }).unwrap();
            let n = trains[0].len() as f64;
            // mean 1000, sd sqrt(1000)
            assert!((n - 1000.0).abs() < 3.0 * 1000f64.sqrt(), "{n}");
        }
    }

    #[test]
    fn poisson_is_reproducible() {
        let cfg = EncodingConfig {
            max_rate: 50.0,
            duration: 0.5,
            seed: 99,
            intensity_scale: 1.0,
        };
        let img: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        assert_eq!(
            poisson_encode(&img, &cfg).unwrap(),
            poisson_encode(&img, &cfg).unwrap()
        );
    }

    #[test]
    fn poisson_rejects_out_of_range_pixels() {
        let cfg = EncodingConfig {
            max_rate: 50.0,
            duration: 0.5,
            seed: 1,
            intensity_scale: 1.0,
        };
        assert!(poisson_encode(&[1.5], &cfg).is_err());
    }

    #[test]
    fn decode_tie_break_and_one_hot() {
        let labels: Vec<usize> = (0..10).collect();
        assert_eq!(rate_decode(&[0; 10], &labels).unwrap(), 0);
        let mut c = [0u32; 10];
        c[7] = 3;
        assert_eq!(rate_decode(&c, &labels).unwrap(), 7);
        assert!(matches!(rate_decode(&[], &[]), Err(Error::EmptyLabelMap)));
    }

    #[test]
    fn decode_matches_exhaustive_oracle() {
        // two classes, two channels, every labelling and small count pair
        for l0 in 0..2usize {
            for l1 in 0..2usize {
                let labels = [l0, l1];
                for a in 0..4u32 {
                    for b in 0..4u32 {
                        let counts = [a, b];
                        // oracle: enumerate classes, mean over owned channels
                        let mut best_class = None;
                        let mut best_mean = f64::NEG_INFINITY;
                        for class in 0..2 {
                            let owned: Vec<f64> = (0..2)
                                .filter(|&ch| labels[ch] == class)
                                .map(|ch| counts[ch] as f64)
                                .collect();
                            if owned.is_empty() {
                                continue;
                            }
                            let m = owned.iter().sum::<f64>() / owned.len() as f64;
                            if m > best_mean {
                                best_mean = m;
                                best_class = Some(class);
                            }
                        }
                        assert_eq!(rate_decode(&counts, &labels).unwrap(), best_class.unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn raster_round_trip() {
        let trains = vec![
            SpikeTrain::new(0, vec![0.1, 0.3]).unwrap(),
            SpikeTrain::new(1, vec![0.2]).unwrap(),
        ];
        let v = raster_json(&trains);
        let ev: Vec<RasterEvent> = serde_json::from_value(v["events"].clone()).unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(trains_from_events(&ev, 2).unwrap(), trains);
        let mut buf = Vec::new();
        write_raster_csv(&trains, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("channel_id,time_s\n0,"));
        assert_eq!(s.lines().count(), 4);
    }
}
