//! CSV serialization of instances and traces.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::mechanism::{Agent, MechanismTrace, MultiAgent, MultiSlotTrace};
use crate::pricing::Price;

/// Formats `x` rounded to 12 significant digits, locale-free, shortest form;
/// magnitudes below 1e-5 or from 1e16 up use exponent notation.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    let a = rounded.abs();
    let s = if a != 0.0 && !(1e-5..1e16).contains(&a) { format!("{rounded:e}") } else { format!("{rounded}") };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn fmt_price(p: Price) -> String {
    match p {
        Price::Finite(v) => fmt_num(v),
        Price::Infinite => "inf".into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::validation(format!("csv: {e}"))
}

/// Writes `v,r` rows with a header.
pub fn write_instance<W: Write>(agents: &[Agent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["v", "r"]).map_err(csv_err)?;
    for a in agents {
        w.write_record([fmt_num(a.v), fmt_num(a.r)]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::validation(e.to_string()))
}

/// Reads `v,r` rows; the header row is required.
pub fn read_instance<R: Read>(input: R) -> Result<Vec<Agent>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("instance CSV lacks a '{name}' column")))
    };
    let (iv, ir) = (col("v")?, col("r")?);
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::validation(format!("row {}: cannot parse '{}'", line + 2, rec.get(i).unwrap_or(""))))
        };
        out.push(Agent::new(field(iv)?, field(ir)?));
    }
    Ok(out)
}

/// Writes the per-agent trace followed by a summary row.
pub fn write_trace<W: Write>(trace: &MechanismTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "v", "r", "accepted", "payment", "utility", "y_after", "price_after", "P_n", "D_n"])
        .map_err(csv_err)?;
    for s in &trace.steps {
        w.write_record([
            s.n.to_string(),
            fmt_num(s.v),
            fmt_num(s.r),
            (s.accepted as u8).to_string(),
            fmt_num(s.payment),
            fmt_num(s.utility),
            fmt_num(s.y_after),
            fmt_price(s.price_after),
            fmt_num(s.primal),
            fmt_num(s.dual),
        ])
        .map_err(csv_err)?;
    }
    let accepted: Vec<_> = trace.steps.iter().filter(|s| s.accepted).collect();
    w.write_record([
        "summary".to_string(),
        fmt_num(accepted.iter().map(|s| s.v).sum()),
        fmt_num(accepted.iter().map(|s| s.r).sum()),
        accepted.len().to_string(),
        fmt_num(trace.steps.iter().map(|s| s.payment).sum()),
        fmt_num(trace.steps.iter().map(|s| s.utility).sum()),
        fmt_num(trace.final_utilization),
        fmt_price(trace.final_price),
        fmt_num(trace.s_online),
        fmt_num(trace.final_dual()),
    ])
    .map_err(csv_err)?;
    w.flush().map_err(|e| Error::validation(e.to_string()))
}

/// Writes a multi-slot trace: one utilization and price column per slot.
pub fn write_multislot_trace<W: Write>(trace: &MultiSlotTrace, instance: &[MultiAgent], out: W) -> Result<()> {
    if instance.len() != trace.steps.len() {
        return Err(Error::validation("instance and trace lengths differ"));
    }
    let slots = trace.omegas.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string(), "v".into(), "accepted".into(), "payment".into(), "utility".into()];
    for t in 0..slots {
        header.push(format!("y_after_{t}"));
        header.push(format!("price_after_{t}"));
    }
    header.extend(["P_n".to_string(), "D_n".into()]);
    w.write_record(&header).map_err(csv_err)?;
    for (s, a) in trace.steps.iter().zip(instance) {
        let mut row = vec![s.n.to_string(), fmt_num(a.v), (s.accepted as u8).to_string(), fmt_num(s.payment), fmt_num(s.utility)];
        for t in 0..slots {
            row.push(fmt_num(s.y_after[t]));
            row.push(fmt_price(s.price_after[t]));
        }
        row.extend([fmt_num(s.primal), fmt_num(s.dual)]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::validation(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(1.19645786334123e-12), "1.19645786334e-12");
        assert_eq!(fmt_num(-2.5e20), "-2.5e20");
        assert_eq!(fmt_num(1e-5), "0.00001");
    }

    #[test]
    fn instance_round_trip() {
        let agents = vec![Agent::new(0.25, 0.001), Agent::new(3.0, 0.5)];
        let mut buf = Vec::new();
        write_instance(&agents, &mut buf).unwrap();
        assert_eq!(read_instance(buf.as_slice()).unwrap(), agents);
        assert!(read_instance("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_instance("v,r\n1,x\n".as_bytes()).is_err());
    }
}
