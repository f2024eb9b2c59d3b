//! Audio input, band-limited resampling and magnitude STFTs.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Mono audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

fn format_tag_name(tag: u16) -> &'static str {
    match tag {
        WAVE_FORMAT_PCM => "PCM",
        2 => "Microsoft ADPCM",
        WAVE_FORMAT_IEEE_FLOAT => "IEEE float",
        6 => "A-law",
        7 => "mu-law",
        0x11 => "IMA ADPCM",
        0x55 => "MPEG layer 3",
        WAVE_FORMAT_EXTENSIBLE => "extensible",
        _ => "unknown",
    }
}

struct FmtChunk {
    tag: u16,
    channels: u16,
    bits: u16,
}

/// Walks the RIFF chunk list up to `fmt ` so unsupported encodings can be
/// reported by name before handing the file to the decoder.
fn read_fmt_chunk(path: &Path) -> Result<FmtChunk> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; 12];
    reader
        .read_exact(&mut header)
        .map_err(|_| Error::Format {
            chunk: "RIFF".into(),
            detail: "file too short for a RIFF header".into(),
        })?;
    if &header[0..4] != b"RIFF" || &header[8..12] != b"WAVE" {
        return Err(Error::Format {
            chunk: "RIFF".into(),
            detail: "not a RIFF/WAVE file".into(),
        });
    }
    loop {
        let mut chunk = [0u8; 8];
        reader.read_exact(&mut chunk).map_err(|_| Error::Format {
            chunk: "fmt ".into(),
            detail: "no fmt chunk before end of file".into(),
        })?;
        let size = u32::from_le_bytes(chunk[4..8].try_into().unwrap()) as usize;
        let mut body = vec![0u8; size + (size & 1)];
        reader.read_exact(&mut body).map_err(|_| Error::Format {
            chunk: String::from_utf8_lossy(&chunk[0..4]).into_owned(),
            detail: "truncated chunk".into(),
        })?;
        if &chunk[0..4] == b"fmt " {
            if size < 16 {
                return Err(Error::Format {
                    chunk: "fmt ".into(),
                    detail: format!("fmt chunk of {size} bytes is too small"),
                });
            }
            let mut tag = u16::from_le_bytes([body[0], body[1]]);
            let channels = u16::from_le_bytes([body[2], body[3]]);
            let bits = u16::from_le_bytes([body[14], body[15]]);
            if tag == WAVE_FORMAT_EXTENSIBLE && size >= 26 {
                // The sub-format GUID starts with the plain format tag.
                tag = u16::from_le_bytes([body[24], body[25]]);
            }
            return Ok(FmtChunk {
                tag,
                channels,
                bits,
            });
        }
    }
}

/// Reads a PCM WAV (16/24-bit integer or 32-bit float, mono or stereo).
/// Stereo is averaged to mono.
pub fn load_audio(path: &Path) -> Result<AudioClip> {
    let fmt = read_fmt_chunk(path)?;
    let supported = matches!(
        (fmt.tag, fmt.bits),
        (WAVE_FORMAT_PCM, 16) | (WAVE_FORMAT_PCM, 24) | (WAVE_FORMAT_IEEE_FLOAT, 32)
    );
    if !supported {
        return Err(Error::Format {
            chunk: "fmt ".into(),
            detail: format!(
                "{} encoding (format tag {}) with {} bits per sample is not supported",
                format_tag_name(fmt.tag),
                fmt.tag,
                fmt.bits
            ),
        });
    }
    if !(1..=2).contains(&fmt.channels) {
        return Err(Error::Format {
            chunk: "fmt ".into(),
            detail: format!("{} channels; only mono and stereo are supported", fmt.channels),
        });
    }

    let mut reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| hound_error(path, e))?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| hound_error(path, e))?,
    };
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| (frame.iter().sum::<f64>() / channels as f64).clamp(-1.0, 1.0))
        .collect();
    AudioClip::new(samples, f64::from(spec.sample_rate))
}

fn hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Format {
            chunk: "data".into(),
            detail: other.to_string(),
        },
    }
}

/// Writes a 16-bit PCM mono WAV. The sample rate must be a whole number.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    if clip.sample_rate.fract() != 0.0 {
        return Err(Error::invalid(format!(
            "cannot store a {} Hz clip in a WAV header",
            clip.sample_rate
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

const SINC_ZEROS: usize = 16;
const SINC_TABLE_RES: usize = 1024;
const RESAMPLE_ROLLOFF: f64 = 0.94;

/// Blackman-windowed sinc sampled at `SINC_TABLE_RES` points per zero crossing.
fn sinc_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = SINC_ZEROS * SINC_TABLE_RES + 2;
        (0..n)
            .map(|i| {
                let u = i as f64 / SINC_TABLE_RES as f64;
                if u > SINC_ZEROS as f64 {
                    return 0.0;
                }
                let sinc = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                let x = 0.5 + 0.5 * u / SINC_ZEROS as f64;
                let window =
                    0.42 - 0.5 * (2.0 * PI * x).cos() + 0.08 * (4.0 * PI * x).cos();
                sinc * window
            })
            .collect()
    })
}

fn sinc_kernel(u: f64) -> f64 {
    let table = sinc_table();
    let pos = u.abs() * SINC_TABLE_RES as f64;
    let idx = pos as usize;
    if idx + 1 >= table.len() {
        return 0.0;
    }
    let frac = pos - idx as f64;
    table[idx] + frac * (table[idx + 1] - table[idx])
}

/// Band-limited resampling with a windowed-sinc interpolator.
///
/// The output length is `round(len * target / rate)`, so the duration is
/// preserved within one output sample period.
pub fn resample(clip: &AudioClip, target_rate: f64) -> AudioClip {
    assert!(target_rate > 0.0, "target rate must be positive");
    if (target_rate - clip.sample_rate).abs() < 1e-9 {
        return clip.clone();
    }
    let ratio = target_rate / clip.sample_rate;
    let n_out = (clip.len() as f64 * ratio).round() as usize;
    let cutoff = 0.5 * clip.sample_rate.min(target_rate) * RESAMPLE_ROLLOFF;
    // sinc argument advance per input sample
    let step = 2.0 * cutoff / clip.sample_rate;
    let half_width = SINC_ZEROS as f64 / step;
    let x = &clip.samples;
    let last = x.len() as isize - 1;

    let samples = (0..n_out)
        .map(|n| {
            let centre = n as f64 / ratio;
            let lo = ((centre - half_width).ceil() as isize).max(0);
            let hi = ((centre + half_width).floor() as isize).min(last);
            let mut acc = 0.0;
            for k in lo..=hi {
                acc += x[k as usize] * sinc_kernel((centre - k as f64) * step);
            }
            acc * step
        })
        .collect();
    AudioClip {
        samples,
        sample_rate: target_rate,
    }
}

/// STFT analysis parameters. Millisecond values are converted with
/// `round(ms * sr / 1000)`; a window within one sample of a power of two is
/// snapped to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub sample_rate: f64,
    pub window_samples: usize,
    pub hop_samples: usize,
}

impl StftConfig {
    pub fn from_ms(window_ms: f64, hop_ms: f64, sample_rate: f64) -> Result<Self> {
        let to_samples = |ms: f64| (ms * sample_rate / 1000.0).round() as usize;
        let mut window_samples = to_samples(window_ms);
        let pow2 = window_samples.max(1).next_power_of_two();
        for candidate in [pow2 / 2, pow2] {
            if candidate > 0 && window_samples.abs_diff(candidate) <= 1 {
                window_samples = candidate;
            }
        }
        let hop_samples = to_samples(hop_ms);
        if hop_samples < 1 || window_samples < hop_samples {
            return Err(Error::invalid(format!(
                "STFT needs window >= hop >= 1 sample, got window {window_samples}, hop {hop_samples}"
            )));
        }
        Ok(Self {
            window_ms,
            hop_ms,
            sample_rate,
            window_samples,
            hop_samples,
        })
    }

    pub fn chroma() -> Self {
        Self::from_ms(743.0, 92.2, 5512.5).expect("valid preset")
    }

    pub fn lfs() -> Self {
        Self::from_ms(64.0, 8.0, 500.0).expect("valid preset")
    }

    pub fn odf() -> Self {
        Self::from_ms(23.2, 11.6, 44100.0).expect("valid preset")
    }

    pub fn mcqt() -> Self {
        Self::from_ms(185.8, 11.6, 11025.0).expect("valid preset")
    }

    pub fn bins(&self) -> usize {
        self.window_samples / 2 + 1
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_samples as f64 / self.sample_rate
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_samples {
            0
        } else {
            (len - self.window_samples) / self.hop_samples + 1
        }
    }
}

/// Magnitude spectrogram, frames × bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrameSeries {
    pub magnitudes: Array2<f64>,
    /// Frame centres in seconds.
    pub frame_times: Vec<f64>,
    pub bin_freqs: Vec<f64>,
    pub config: StftConfig,
}

impl SpectralFrameSeries {
    pub fn frames(&self) -> usize {
        self.magnitudes.nrows()
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn stft_magnitude(clip: &AudioClip, config: &StftConfig) -> Result<SpectralFrameSeries> {
    if (clip.sample_rate - config.sample_rate).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "clip is at {} Hz but the STFT expects {} Hz",
            clip.sample_rate, config.sample_rate
        )));
    }
    let win = config.window_samples;
    let hop = config.hop_samples;
    if clip.len() < win {
        return Err(Error::InputTooShort {
            needed: win,
            got: clip.len(),
        });
    }
    let frames = config.frame_count(clip.len());
    let bins = config.bins();
    let window = hann(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex::default(); win];
    let mut magnitudes = Array2::<f64>::zeros((frames, bins));

    for f in 0..frames {
        let start = f * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(clip.samples[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, m) in magnitudes.row_mut(f).iter_mut().enumerate() {
            *m = buf[k].norm();
        }
    }

    let sr = config.sample_rate;
    Ok(SpectralFrameSeries {
        magnitudes,
        frame_times: (0..frames)
            .map(|f| (f * hop) as f64 / sr + win as f64 / (2.0 * sr))
            .collect(),
        bin_freqs: (0..bins).map(|k| k as f64 * sr / win as f64).collect(),
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, sr: f64, secs: f64) -> AudioClip {
        let n = (sr * secs).round() as usize;
        AudioClip::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / sr).sin())
                .collect(),
            sr,
        )
        .unwrap()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn table_presets_round_to_expected_sample_counts() {
        let c = StftConfig::chroma();
        assert_eq!((c.window_samples, c.hop_samples), (4096, 508));
        let l = StftConfig::lfs();
        assert_eq!((l.window_samples, l.hop_samples), (32, 4));
        let o = StftConfig::odf();
        assert_eq!((o.window_samples, o.hop_samples), (1024, 512));
        let m = StftConfig::mcqt();
        assert_eq!((m.window_samples, m.hop_samples), (2048, 128));
    }

    #[test]
    fn resample_identity_is_exact() {
        let clip = sine(440.0, 0.5, 44100.0, 0.1);
        assert_eq!(resample(&clip, 44100.0), clip);
    }

    #[test]
    fn resample_preserves_in_band_tone() {
        let clip = sine(100.0, 0.8, 44100.0, 2.0);
        let out = resample(&clip, 500.0);
        assert_eq!(out.sample_rate, 500.0);
        assert!((out.duration() - clip.duration()).abs() <= 1.0 / 500.0);
        // compare away from the edges against the analytic 500 Hz tone
        let expected: Vec<f64> = (0..out.len())
            .map(|i| 0.8 * (2.0 * PI * 100.0 * i as f64 / 500.0).sin())
            .collect();
        let mid = 100..out.len() - 100;
        let amp_ratio = rms(&out.samples[mid.clone()]) / rms(&expected[mid.clone()]);
        assert!((amp_ratio - 1.0).abs() < 0.01, "amplitude ratio {amp_ratio}");
        let max_err = mid
            .map(|i| (out.samples[i] - expected[i]).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.02, "max sample error {max_err}");
    }

    #[test]
    fn resample_rejects_content_above_new_nyquist() {
        let clip = sine(1000.0, 0.8, 44100.0, 2.0);
        let out = resample(&clip, 500.0);
        let ratio = rms(&out.samples[50..out.len() - 50]) / rms(&clip.samples);
        assert!(ratio < 0.05, "rms ratio {ratio}");
    }

    #[test]
    fn stft_of_silence_is_zero() {
        let clip = AudioClip::new(vec![0.0; 5000], 44100.0).unwrap();
        let spec = stft_magnitude(&clip, &StftConfig::odf()).unwrap();
        assert!(spec.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn stft_peak_bin_tracks_tone_frequency() {
        let clip = sine(1000.0, 0.5, 44100.0, 0.5);
        let cfg = StftConfig::odf();
        let spec = stft_magnitude(&clip, &cfg).unwrap();
        let expected = 1000.0 * cfg.window_samples as f64 / 44100.0;
        for row in spec.magnitudes.rows() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!((argmax as f64 - expected).abs() <= 1.0);
        }
    }

    #[test]
    fn stft_rejects_short_input() {
        let clip = AudioClip::new(vec![0.0; 100], 44100.0).unwrap();
        assert!(matches!(
            stft_magnitude(&clip, &StftConfig::odf()),
            Err(Error::InputTooShort { needed: 1024, got: 100 })
        ));
    }

    #[test]
    fn frame_energy_bounded_by_windowed_time_energy() {
        // One-sided spectral energy never exceeds N times the windowed
        // time-domain energy (the full two-sided Parseval identity).
        let clip = sine(333.0, 0.7, 44100.0, 0.3);
        let cfg = StftConfig::odf();
        let spec = stft_magnitude(&clip, &cfg).unwrap();
        let w = hann(cfg.window_samples);
        for (f, row) in spec.magnitudes.rows().into_iter().enumerate() {
            let start = f * cfg.hop_samples;
            let time_energy: f64 = (0..cfg.window_samples)
                .map(|i| (clip.samples[start + i] * w[i]).powi(2))
                .sum();
            let spec_energy: f64 = row.iter().map(|m| m * m).sum();
            assert!(spec_energy <= cfg.window_samples as f64 * time_energy * (1.0 + 1e-9));
        }
    }
}
