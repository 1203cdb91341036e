//! Median aggregation of per-repetition reports into one CSV.

use std::collections::BTreeMap;

use super::RunError;

pub const AGGREGATE_HEADER: &str = "cycle,pipeline_id,y,pred_error,cpu_ms,model_bytes";

/// Columns carried over from the repetition reports, by name.
const VALUE_COLUMNS: [&str; 4] = ["y", "pred_error", "cpu_ms", "model_bytes"];

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite report values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Collapse repetition reports into per-(cycle, pipeline) medians of
/// y, pred_error, cpu_ms and model_bytes. All inputs must share one header.
pub fn aggregate_reports(reports: &[String]) -> Result<String, RunError> {
    if reports.is_empty() {
        return Err(RunError::Runtime(
            "no repetition reports to aggregate".into(),
        ));
    }
    let header = reports[0]
        .lines()
        .next()
        .ok_or_else(|| RunError::Runtime("empty repetition report".into()))?
        .to_string();
    let columns: Vec<&str> = header.split(',').collect();
    let index_of = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| RunError::Runtime(format!("report lacks column {name}")))
    };
    let cycle_col = index_of("cycle")?;
    let pipeline_col = index_of("pipeline_id")?;
    let value_cols: Vec<usize> = VALUE_COLUMNS
        .iter()
        .map(|name| index_of(name))
        .collect::<Result<_, _>>()?;

    let mut groups: BTreeMap<(u64, String), Vec<Vec<f64>>> = BTreeMap::new();
    for report in reports {
        let mut lines = report.lines();
        let this_header = lines.next().unwrap_or_default();
        if this_header != header {
            return Err(RunError::Runtime(format!(
                "report header mismatch: {this_header:?} vs {header:?}"
            )));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(report.as_bytes());
        for record in reader.records() {
            let record = record.map_err(|e| RunError::Runtime(e.to_string()))?;
            let cycle: u64 = record
                .get(cycle_col)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| RunError::Runtime("unparsable cycle column".into()))?;
            let pipeline = record
                .get(pipeline_col)
                .ok_or_else(|| RunError::Runtime("missing pipeline_id column".into()))?
                .to_string();
            let values = value_cols
                .iter()
                .map(|&col| {
                    record
                        .get(col)
                        .and_then(|v| v.parse::<f64>().ok())
                        .ok_or_else(|| RunError::Runtime("unparsable value column".into()))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            groups.entry((cycle, pipeline)).or_default().push(values);
        }
    }

    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for ((cycle, pipeline), rows) in groups {
        let medians: Vec<f64> = (0..VALUE_COLUMNS.len())
            .map(|k| {
                let mut column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                median(&mut column)
            })
            .collect();
        out.push_str(&format!(
            "{cycle},{pipeline},{},{},{},{}\n",
            medians[0], medians[1], medians[2], medians[3]
        ));
    }
    Ok(out)
}
