//! Audio frontend: chirp excitation, parametric binaural echo synthesis for
//! synthetic scenes, magnitude STFT, and 16-bit PCM WAV files.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const SPEED_OF_SOUND: f64 = 340.0;
pub const EAR_SEPARATION: f64 = 0.2;
pub const DEFAULT_SAMPLE_RATE: u32 = 44100;
/// Echo tail length appended after the excitation; covers round trips out to
/// 0.08 * 340 / 2 = 13.6 m, past the 12 m evaluation cap.
pub const ECHO_TAIL_SECONDS: f64 = 0.08;

/// Binaural waveform, both channels the same length, amplitude in [-1, 1].
#[derive(Debug, Clone)]
pub struct EchoClip {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: u32,
}

impl EchoClip {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// Two-channel magnitude STFT, mag is 2 x F x T with F = n_fft/2 + 1.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub mag: Tensor<f64>,
    /// Hz per frequency bin.
    pub freq_resolution: f64,
    /// Seconds per frame hop.
    pub time_hop: f64,
}

impl Spectrogram {
    pub fn freq_bins(&self) -> usize {
        self.mag.shape()[1]
    }

    pub fn frames(&self) -> usize {
        self.mag.shape()[2]
    }
}

/// A planar surface reduced to its acoustic contribution.
#[derive(Debug, Clone, Copy)]
pub struct Reflector {
    /// Perpendicular distance in meters, > 0.
    pub distance: f64,
    /// Radians in [-pi/2, pi/2]; positive is to the right.
    pub azimuth: f64,
    /// Unitless reflectivity in (0, 1].
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderWarning {
    pub reflector_index: usize,
    pub message: String,
}

fn chirp_phase(f_start: f64, f_end: f64, duration: f64, t: f64) -> f64 {
    2.0 * PI * (f_start * t + (f_end - f_start) * t * t / (2.0 * duration))
}

/// Linear frequency sweep with unit peak amplitude and zero phase at t = 0.
pub fn gen_chirp(f_start: f64, f_end: f64, duration: f64, sample_rate: u32) -> Result<Vec<f64>> {
    if !(f_start > 0.0 && f_start < f_end) {
        return Err(Error::InvalidArgument(format!(
            "chirp frequencies must satisfy 0 < f_start < f_end, got {f_start}..{f_end}"
        )));
    }
    if f_end > sample_rate as f64 / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "chirp end frequency {f_end} Hz violates Nyquist for {sample_rate} Hz"
        )));
    }
    if duration <= 0.0 {
        return Err(Error::InvalidArgument("chirp duration must be positive".into()));
    }
    let n = (duration * sample_rate as f64).round() as usize;
    Ok((0..n)
        .map(|k| chirp_phase(f_start, f_end, duration, k as f64 / sample_rate as f64).sin())
        .collect())
}

/// Renders a binaural echo clip: each reflector contributes the chirp delayed
/// by the round trip 2d/c, attenuated by strength/d^2, with an interaural
/// delay of ear_separation*sin(azimuth)/c between the channels. Additive
/// Gaussian noise is seeded, so the render is bit-deterministic.
pub fn render_echo(
    chirp: &[f64],
    reflectors: &[Reflector],
    noise_std: f64,
    seed: u64,
    sample_rate: u32,
) -> Result<(EchoClip, Vec<RenderWarning>)> {
    for (i, r) in reflectors.iter().enumerate() {
        if r.distance <= 0.0 {
            return Err(Error::InvalidArgument(format!("reflector {i} distance must be > 0")));
        }
    }
    let sr = sample_rate as f64;
    let out_len = chirp.len() + (ECHO_TAIL_SECONDS * sr).round() as usize;
    let mut left = vec![0.0f64; out_len];
    let mut right = vec![0.0f64; out_len];
    let mut warnings = Vec::new();

    for (i, r) in reflectors.iter().enumerate() {
        let round_trip = 2.0 * r.distance / SPEED_OF_SOUND;
        let itd = EAR_SEPARATION * r.azimuth.sin() / SPEED_OF_SOUND;
        // positive azimuth: source on the right, right ear hears it earlier
        let delay_l = round_trip + itd / 2.0;
        let delay_r = round_trip - itd / 2.0;
        let amp = r.strength / (r.distance * r.distance);
        for (channel, delay) in [(&mut left, delay_l), (&mut right, delay_r)] {
            let d0 = (delay * sr).round() as i64;
            if d0 < 0 || d0 as usize >= out_len {
                warnings.push(RenderWarning {
                    reflector_index: i,
                    message: format!("delay {delay:.4}s beyond clip, contribution dropped"),
                });
                continue;
            }
            let d0 = d0 as usize;
            let fit = chirp.len().min(out_len - d0);
            if fit < chirp.len() {
                warnings.push(RenderWarning {
                    reflector_index: i,
                    message: format!("contribution truncated to {fit} of {} samples", chirp.len()),
                });
            }
            for (k, &c) in chirp[..fit].iter().enumerate() {
                channel[d0 + k] += amp * c;
            }
        }
    }

    if noise_std > 0.0 {
        let mut rng = Rng::seed_from(seed);
        for s in left.iter_mut() {
            *s += noise_std * rng.normal();
        }
        for s in right.iter_mut() {
            *s += noise_std * rng.normal();
        }
    }
    for s in left.iter_mut().chain(right.iter_mut()) {
        *s = s.clamp(-1.0, 1.0);
    }
    Ok((EchoClip { left, right, sample_rate }, warnings))
}

// ---------------------------------------------------------------------------
// STFT
// ---------------------------------------------------------------------------

/// In-place iterative radix-2 FFT over (re, im).
fn fft(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // bit reversal
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0;
        while i < n {
            let mut cur_r = 1.0;
            let mut cur_i = 0.0;
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cur_r - im[i + k + len / 2] * cur_i,
                    re[i + k + len / 2] * cur_i + im[i + k + len / 2] * cur_r,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let nr = cur_r * wr - cur_i * wi;
                cur_i = cur_r * wi + cur_i * wr;
                cur_r = nr;
            }
            i += len;
        }
        len <<= 1;
    }
}

fn hann_window(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos())).collect()
}

/// Per-channel magnitude of Hann-windowed DFT frames. Frames start at
/// multiples of `hop`; T = floor((L - n_fft)/hop) + 1.
pub fn compute_stft(clip: &EchoClip, n_fft: usize, hop: usize) -> Result<Spectrogram> {
    if !n_fft.is_power_of_two() || n_fft == 0 {
        return Err(Error::InvalidArgument(format!("n_fft must be a power of two, got {n_fft}")));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::InvalidArgument(format!("hop must satisfy 0 < hop <= n_fft, got {hop}")));
    }
    let len = clip.len();
    if len < n_fft {
        return Err(Error::InvalidArgument(format!(
            "clip length {len} shorter than n_fft {n_fft}"
        )));
    }
    let frames = (len - n_fft) / hop + 1;
    let bins = n_fft / 2 + 1;
    let window = hann_window(n_fft);
    let mut mag = Tensor::zeros(&[2, bins, frames]);
    for (ch, samples) in [(0usize, &clip.left), (1usize, &clip.right)] {
        let mut re = vec![0.0; n_fft];
        let mut im = vec![0.0; n_fft];
        for t in 0..frames {
            let start = t * hop;
            for k in 0..n_fft {
                re[k] = samples[start + k] * window[k];
                im[k] = 0.0;
            }
            fft(&mut re, &mut im);
            for b in 0..bins {
                let m = (re[b] * re[b] + im[b] * im[b]).sqrt();
                mag.set3(ch, b, t, m);
            }
        }
    }
    Ok(Spectrogram {
        mag,
        freq_resolution: clip.sample_rate as f64 / n_fft as f64,
        time_hop: hop as f64 / clip.sample_rate as f64,
    })
}

/// Expected STFT frame of an echo onset for a wall at `distance` meters.
pub fn onset_frame(distance: f64, sample_rate: u32, hop: usize) -> usize {
    ((2.0 * distance / SPEED_OF_SOUND) * sample_rate as f64 / hop as f64).floor() as usize
}

// ---------------------------------------------------------------------------
// WAV (RIFF PCM, 16-bit signed little-endian, 2 channels)
// ---------------------------------------------------------------------------

pub fn write_wav(path: &Path, clip: &EchoClip) -> Result<()> {
    let n = clip.len();
    let data_bytes = (n * 2 * 2) as u32;
    let mut buf = Vec::with_capacity(44 + data_bytes as usize);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&2u16.to_le_bytes()); // stereo
    buf.extend_from_slice(&clip.sample_rate.to_le_bytes());
    buf.extend_from_slice(&(clip.sample_rate * 4).to_le_bytes()); // byte rate
    buf.extend_from_slice(&4u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_bytes.to_le_bytes());
    for i in 0..n {
        for v in [clip.left[i], clip.right[i]] {
            let q = (v.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            buf.extend_from_slice(&q.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<EchoClip> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 44 || &buf[..4] != b"RIFF" || &buf[8..12] != b"WAVE" {
        return Err(Error::Format(format!("{}: not a RIFF/WAVE file", path.display())));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= buf.len() {
        let id = &buf[pos..pos + 4];
        let size = u32::from_le_bytes([buf[pos + 4], buf[pos + 5], buf[pos + 6], buf[pos + 7]]) as usize;
        let body = pos + 8;
        if body + size > buf.len() {
            return Err(Error::Format("truncated WAV chunk".into()));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("short fmt chunk".into()));
                }
                let format = u16::from_le_bytes([buf[body], buf[body + 1]]);
                let channels = u16::from_le_bytes([buf[body + 2], buf[body + 3]]);
                let sr = u32::from_le_bytes([buf[body + 4], buf[body + 5], buf[body + 6], buf[body + 7]]);
                let bits = u16::from_le_bytes([buf[body + 14], buf[body + 15]]);
                fmt = Some((format, channels, sr, bits));
            }
            b"data" => data = Some(&buf[body..body + size]),
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    let (format, channels, sr, bits) =
        fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    if format != 1 || channels != 2 || bits != 16 {
        return Err(Error::Format(format!(
            "expected 16-bit stereo PCM, got format={format} channels={channels} bits={bits}"
        )));
    }
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    let n = data.len() / 4;
    let mut left = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for f in 0..n {
        let l = i16::from_le_bytes([data[f * 4], data[f * 4 + 1]]);
        let r = i16::from_le_bytes([data[f * 4 + 2], data[f * 4 + 3]]);
        left.push(l as f64 / 32767.0);
        right.push(r as f64 / 32767.0);
    }
    Ok(EchoClip { left, right, sample_rate: sr })
}
