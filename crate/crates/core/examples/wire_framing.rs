//! Encodes an envelope, shows the frame bytes, then decodes a stream that
//! arrives in awkward chunks. Also registers a custom codec.
//!
//! ```bash
//! cargo run -p cosim --example wire_framing
//! ```

use cosim::wire::{encode_frame, CodecRegistry, FrameDecoder, MessageEnvelope};
use serde_json::json;

#[derive(Debug, PartialEq)]
struct Heading(f64);

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = MessageEnvelope::new("/sim/odometry", "Odometry", 0, 0.1, json!({"speed": 1.5}));
    let frame = encode_frame(&env)?;
    println!("prefix {:02x?}", &frame[..4]);
    println!("body   {}", std::str::from_utf8(&frame[4..])?);

    // A custom functor codec: degrees on the wire, radians in memory.
    let reg = CodecRegistry::new().with_codec::<Heading, _, _>(
        "HeadingDeg",
        |h| json!(h.0.to_degrees()),
        |v| v.as_f64().map(|d| Heading(d.to_radians())).ok_or_else(|| "expected a number".into()),
    )?;
    let payload = reg.encode("HeadingDeg", &Heading(std::f64::consts::FRAC_PI_2))?;
    let second = MessageEnvelope::new("/sim/heading", "HeadingDeg", 0, 0.1, payload);

    let mut stream = frame.clone();
    stream.extend(encode_frame(&second)?);
    let mut dec = FrameDecoder::new();
    for chunk in stream.chunks(7) {
        dec.push(chunk);
        while let Some(e) = dec.next_envelope()? {
            println!("decoded {} #{} at t={}: {}", e.topic, e.sequence, e.sim_time, e.payload);
            if e.msg_type == "HeadingDeg" {
                let h: Heading = reg.decode("HeadingDeg", &e.payload)?;
                println!("  heading {:.4} rad", h.0);
            }
        }
    }
    Ok(())
}
