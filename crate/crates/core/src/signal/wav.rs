use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

/// On-disk sample encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Reads a PCM-16 or float-32 RIFF/WAVE file; multi-channel input is averaged to mono.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let reader = WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::MalformedWav("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{bits}-bit {fmt:?}; expected 16-bit PCM or 32-bit float"
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::MalformedWav("file contains no samples".into()));
    }
    if interleaved.len() % channels != 0 {
        return Err(Error::MalformedWav("truncated final frame".into()));
    }
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes a mono file. PCM-16 clamps to the representable range.
pub fn save_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Pcm16 => (16, SampleFormat::Int),
        WavFormat::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path.as_ref(), spec)?;
    match format {
        WavFormat::Pcm16 => {
            for &s in buffer.samples() {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)?;
            }
        }
        WavFormat::Float32 => {
            for &s in buffer.samples() {
                writer.write_sample(s as f32)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: WavSpec, frames: &[i16]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &f in frames {
            w.write_sample(f).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_maps_by_32768() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 22050,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        write_raw(&path, spec, &[0, 16384, -32768]);
        let buf = load_wav(&path).unwrap();
        assert_eq!(buf.samples(), &[0.0, 0.5, -1.0]);
        assert_eq!(buf.sample_rate(), 22050);
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let left = [1000i16, -2000, 32767, 0];
        let right = [3000i16, 2000, -32768, 7];
        let inter: Vec<i16> = left
            .iter()
            .zip(&right)
            .flat_map(|(&l, &r)| [l, r])
            .collect();
        write_raw(&path, spec, &inter);
        let buf = load_wav(&path).unwrap();
        assert_eq!(buf.len(), 4);
        assert_eq!(buf.sample_rate(), 44100);
        for i in 0..4 {
            let expect = (left[i] as f64 / 32768.0 + right[i] as f64 / 32768.0) / 2.0;
            assert_eq!(buf.samples()[i], expect);
        }
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let samples: Vec<f64> = (0..257)
            .map(|i| (((i as f32) * 0.37).sin() * 0.9) as f64)
            .collect();
        let buf = AudioBuffer::new(samples.clone(), 16000).unwrap();
        save_wav(&buf, &path, WavFormat::Float32).unwrap();
        assert_eq!(load_wav(&path).unwrap().samples(), samples.as_slice());
    }

    #[test]
    fn rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFF\x04\x00\x00\x00WAVE").unwrap();
        assert!(matches!(
            load_wav(&junk),
            Err(Error::MalformedWav(_) | Error::Io(_))
        ));

        let empty = dir.path().join("empty.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        write_raw(&empty, spec, &[]);
        assert!(matches!(load_wav(&empty), Err(Error::MalformedWav(_))));

        let pcm24 = dir.path().join("p24.wav");
        let spec24 = WavSpec {
            bits_per_sample: 24,
            ..spec
        };
        let mut w = WavWriter::create(&pcm24, spec24).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&pcm24), Err(Error::UnsupportedCodec(_))));
    }
}
