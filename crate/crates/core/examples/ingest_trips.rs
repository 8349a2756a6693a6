//! Bins a synthetic trip log into per-step journey rates.

use drrp::ingest::{ingest_trip_history, IngestOptions, StationTable};

fn main() {
    let stations = StationTable::from_csv("station_id,capacity\n3004,19\n3010,25\n3021,15\n".as_bytes()).expect("stations");
    let mut log = String::from("start_station,end_station,start_time,duration_seconds\n");
    for day in 1..=5 {
        log += &format!("3004,3010,2023-05-{day:02} 07:05:00,540\n");
        log += &format!("3010,3021,2023-05-{day:02} 07:40:00,1500\n");
        if day % 2 == 0 {
            log += &format!("3021,3004,2023-05-{day:02} 08:15:00,300\n");
        }
    }
    log += "3004,9999,2023-05-01 07:00:00,60\n";
    let opts = IngestOptions { horizon: 8, day_start_minutes: 7.0 * 60.0, ..IngestOptions::default() };
    let (model, report) = ingest_trip_history(log.as_bytes(), &stations, &opts).expect("csv");
    println!("{report:?}");
    for (d, rate) in &model.rates {
        println!("{} -> {} at step {} taking {} steps: {rate:.2} per day", d.i, d.j, d.t, d.k);
    }
}
