use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Die, ETestSeries, ProductionData, SiteValue, ToolVisit, WaferMap};
use crate::error::{Error, Result};

const DIES_HEADER: &[&str] = &["lot_id", "wafer_id", "die_x", "die_y", "pass", "bin"];
const ETESTS_HEADER: &[&str] = &["lot_id", "wafer_id", "site", "test_name", "value"];
const TOOLS_HEADER: &[&str] = &["lot_id", "stage", "tool_id", "timestamp"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub die_rows: usize,
    pub etest_rows: usize,
    pub tool_rows: usize,
    pub wafers: usize,
    pub lots: usize,
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Schema {
            file: file.clone(),
            row: 1,
            message: e.to_string(),
        })?;
    let got = rdr.headers().map_err(|e| Error::Schema {
        file: file.clone(),
        row: 1,
        message: e.to_string(),
    })?;
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::Schema {
            file,
            row: 1,
            message: format!("expected header {:?}, got {:?}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // line 1 is the header
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Schema {
            file: file.clone(),
            row,
            message: e.to_string(),
        })?;
        if rec.len() != header.len() {
            return Err(Error::Schema {
                file: file.clone(),
                row,
                message: format!("expected {} fields, got {}", header.len(), rec.len()),
            });
        }
        rows.push((row, rec));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(file: &Path, row: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec[i].parse().map_err(|_| Error::Schema {
        file: file.display().to_string(),
        row,
        message: format!("cannot parse {name} from {:?}", &rec[i]),
    })
}

/// Reads `dies.csv`, `etests.csv` and `tools.csv`.
///
/// Wafers are registered by the die file, each under exactly one lot.
/// E-test rows must reference a registered wafer of the same lot, and when
/// the tool file has rows every lot with dies must appear in it.
pub fn ingest(dies: &Path, etests: &Path, tools: &Path) -> Result<(ProductionData, IngestCounts)> {
    let die_rows = read_rows(dies, DIES_HEADER)?;
    let dies_name = dies.display().to_string();
    let mut wafer_lot: HashMap<String, String> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut by_wafer: HashMap<String, Vec<Die>> = HashMap::new();
    let mut coords: HashMap<String, BTreeSet<(u32, u32)>> = HashMap::new();
    let mut first_row_of_lot: BTreeMap<String, usize> = BTreeMap::new();
    let (mut max_x, mut max_y) = (0u32, 0u32);
    for (row, rec) in &die_rows {
        let (lot, wafer) = (rec[0].to_string(), rec[1].to_string());
        let x: u32 = field(dies, *row, rec, 2, "die_x")?;
        let y: u32 = field(dies, *row, rec, 3, "die_y")?;
        let pass = match &rec[4] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Schema {
                    file: dies_name.clone(),
                    row: *row,
                    message: format!("pass must be 0 or 1, got {other:?}"),
                })
            }
        };
        let bin = match (pass, rec[5].is_empty()) {
            (true, true) => None,
            (false, false) => Some(field::<u16>(dies, *row, rec, 5, "bin")?),
            _ => {
                return Err(Error::Schema {
                    file: dies_name.clone(),
                    row: *row,
                    message: "bin must be present iff pass=0".into(),
                })
            }
        };
        match wafer_lot.get(&wafer) {
            Some(l) if *l != lot => {
                return Err(Error::DanglingReference {
                    file: dies_name.clone(),
                    row: *row,
                    message: format!("wafer {wafer} belongs to lot {l}, not {lot}"),
                })
            }
            Some(_) => {}
            None => {
                wafer_lot.insert(wafer.clone(), lot.clone());
                order.push(wafer.clone());
            }
        }
        first_row_of_lot.entry(lot).or_insert(*row);
        if !coords.entry(wafer.clone()).or_default().insert((x, y)) {
            return Err(Error::Schema {
                file: dies_name.clone(),
                row: *row,
                message: format!("duplicate die coordinate ({x}, {y}) on wafer {wafer}"),
            });
        }
        max_x = max_x.max(x);
        max_y = max_y.max(y);
        by_wafer.entry(wafer).or_default().push(Die { x, y, pass, bin });
    }

    let etest_rows = read_rows(etests, ETESTS_HEADER)?;
    let mut series: Vec<ETestSeries> = Vec::new();
    let mut series_idx: HashMap<String, usize> = HashMap::new();
    for (row, rec) in &etest_rows {
        let (lot, wafer) = (&rec[0], &rec[1]);
        if wafer_lot.get(wafer).map(String::as_str) != Some(lot) {
            return Err(Error::DanglingReference {
                file: etests.display().to_string(),
                row: *row,
                message: format!("unknown wafer {wafer} in lot {lot}"),
            });
        }
        let value: f64 = field(etests, *row, rec, 4, "value")?;
        if !value.is_finite() {
            return Err(Error::Schema {
                file: etests.display().to_string(),
                row: *row,
                message: "e-test value must be finite".into(),
            });
        }
        let name = rec[3].to_string();
        let idx = *series_idx.entry(name.clone()).or_insert_with(|| {
            series.push(ETestSeries {
                test_name: name,
                values: Vec::new(),
            });
            series.len() - 1
        });
        series[idx].values.push(SiteValue {
            lot_id: lot.to_string(),
            wafer_id: wafer.to_string(),
            site: field(etests, *row, rec, 2, "site")?,
            value,
        });
    }

    let tool_rows = read_rows(tools, TOOLS_HEADER)?;
    let mut visits = Vec::with_capacity(tool_rows.len());
    for (row, rec) in &tool_rows {
        visits.push(ToolVisit {
            lot_id: rec[0].to_string(),
            stage: rec[1].to_string(),
            tool_id: rec[2].to_string(),
            timestamp: field(tools, *row, rec, 3, "timestamp")?,
        });
    }
    if !visits.is_empty() {
        let tool_lots: BTreeSet<&str> = visits.iter().map(|v| v.lot_id.as_str()).collect();
        if let Some((lot, row)) = first_row_of_lot.iter().find(|(l, _)| !tool_lots.contains(l.as_str())) {
            return Err(Error::DanglingReference {
                file: dies_name,
                row: *row,
                message: format!("lot {lot} has no tool history"),
            });
        }
    }

    let wafers = order
        .into_iter()
        .map(|w| {
            let lot = wafer_lot[&w].clone();
            let dies = by_wafer.remove(&w).unwrap_or_default();
            WaferMap::new(w, lot, max_x + 1, max_y + 1, dies)
        })
        .collect::<Result<Vec<_>>>()?;
    let data = ProductionData {
        wafers,
        etests: series,
        tools: visits,
    };
    let counts = IngestCounts {
        die_rows: die_rows.len(),
        etest_rows: etest_rows.len(),
        tool_rows: tool_rows.len(),
        wafers: data.wafers.len(),
        lots: data.lot_ids().len(),
    };
    Ok((data, counts))
}

/// Writes the three CSV files into `dir` (created if missing).
pub fn write_csv(data: &ProductionData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let open = |name: &str, header: &[&str]| -> Result<std::io::BufWriter<fs::File>> {
        let path = dir.join(name);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(&path, e))?;
        Ok(w)
    };
    let io = |name: &str| {
        let path = dir.join(name);
        move |e| Error::io(path, e)
    };

    let mut w = open("dies.csv", DIES_HEADER)?;
    for wafer in &data.wafers {
        for d in &wafer.dies {
            let bin = d.bin.map(|b| b.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{},{}", wafer.lot_id, wafer.wafer_id, d.x, d.y, u8::from(d.pass), bin)
                .map_err(io("dies.csv"))?;
        }
    }
    w.flush().map_err(io("dies.csv"))?;

    let mut w = open("etests.csv", ETESTS_HEADER)?;
    for s in &data.etests {
        for v in &s.values {
            writeln!(w, "{},{},{},{},{}", v.lot_id, v.wafer_id, v.site, s.test_name, v.value).map_err(io("etests.csv"))?;
        }
    }
    w.flush().map_err(io("etests.csv"))?;

    let mut w = open("tools.csv", TOOLS_HEADER)?;
    for t in &data.tools {
        writeln!(w, "{},{},{},{}", t.lot_id, t.stage, t.tool_id, t.timestamp).map_err(io("tools.csv"))?;
    }
    w.flush().map_err(io("tools.csv"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, dies: &str, etests: &str, tools: &str) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        let p = (dir.join("dies.csv"), dir.join("etests.csv"), dir.join("tools.csv"));
        fs::write(&p.0, dies).unwrap();
        fs::write(&p.1, etests).unwrap();
        fs::write(&p.2, tools).unwrap();
        p
    }

    const DH: &str = "lot_id,wafer_id,die_x,die_y,pass,bin\n";
    const EH: &str = "lot_id,wafer_id,site,test_name,value\n";
    const TH: &str = "lot_id,stage,tool_id,timestamp\n";

    #[test]
    fn empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let (d, e, t) = write(dir.path(), DH, EH, TH);
        let (data, counts) = ingest(&d, &e, &t).unwrap();
        assert!(data.wafers.is_empty());
        assert_eq!(counts, IngestCounts::default());
    }

    #[test]
    fn two_wafer_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let dies = format!(
            "{DH}L1,W1,0,0,0,7\nL1,W1,1,0,1,\nL1,W1,0,1,0,7\nL1,W2,0,0,0,7\nL1,W2,1,0,0,3\nL1,W2,1,1,1,\n"
        );
        let etests = format!("{EH}L1,W1,1,VT,1\nL1,W1,2,VT,2\nL1,W2,1,VT,3\n");
        let tools = format!("{TH}L1,LITHO,T1,100\n");
        let (d, e, t) = write(dir.path(), &dies, &etests, &tools);
        let (data, counts) = ingest(&d, &e, &t).unwrap();
        assert_eq!(counts.wafers, 2);
        assert_eq!(counts.lots, 1);
        assert_eq!(counts.die_rows, 6);
        let lots = data.lots();
        assert_eq!(lots[0].bin_fails[&7], 3);
        assert_eq!(lots[0].etest_means["VT"], 2.0);
        let pts = super::super::lot_aggregate(&lots, 7, "VT", &[3, 7]).unwrap();
        assert_eq!(pts, vec![(2.0, 3.0)]);

        // round trip through the writer
        let out = dir.path().join("out");
        write_csv(&data, &out).unwrap();
        let (again, _) = ingest(&out.join("dies.csv"), &out.join("etests.csv"), &out.join("tools.csv")).unwrap();
        assert_eq!(again, data);
    }

    #[test]
    fn dangling_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let dies = format!("{DH}L1,W1,0,0,1,\nL2,W1,1,0,1,\n");
        let (d, e, t) = write(dir.path(), &dies, EH, TH);
        assert!(matches!(ingest(&d, &e, &t), Err(Error::DanglingReference { row: 3, .. })));

        let dies = format!("{DH}L1,W1,0,0,1,\n");
        let etests = format!("{EH}L1,W9,1,VT,1\n");
        let (d, e, t) = write(dir.path(), &dies, &etests, TH);
        assert!(matches!(ingest(&d, &e, &t), Err(Error::DanglingReference { row: 2, .. })));

        let tools = format!("{TH}L7,S,T,1\n");
        let (d, e, t) = write(dir.path(), &dies, EH, &tools);
        assert!(matches!(ingest(&d, &e, &t), Err(Error::DanglingReference { .. })));

        let dies = format!("{DH}L1,W1,0,0,1,\nL1,W1,0,0,0,4\n");
        let (d, e, t) = write(dir.path(), &dies, EH, TH);
        let err = ingest(&d, &e, &t).unwrap_err();
        assert!(matches!(err, Error::Schema { row: 3, .. }) && err.to_string().contains("duplicate"), "{err}");

        let dies = format!("{DH}L1,W1,0,0,1,5\n");
        let (d, e, t) = write(dir.path(), &dies, EH, TH);
        assert!(matches!(ingest(&d, &e, &t), Err(Error::Schema { row: 2, .. })));

        let (d, e, t) = write(dir.path(), "lot,wafer\n", EH, TH);
        assert!(matches!(ingest(&d, &e, &t), Err(Error::Schema { row: 1, .. })));
    }
}
