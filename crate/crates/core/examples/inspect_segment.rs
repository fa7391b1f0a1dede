//! Write a columnar segment, print its directory, read it back, then show
//! that a flipped directory byte is rejected.
//!
//! cargo run --example inspect_segment

use std::net::Ipv4Addr;
use std::sync::Arc;

use dnsflow::colstore::{decode_meta, decode_segment, encode_segment};
use dnsflow::enrich::{EnrichedRecord, SubscriberProfile};
use dnsflow::record::{DnsQueryRecord, QueryType, ServerId};

fn main() {
    let istanbul = SubscriberProfile {
        subscriber_id: 7,
        city: Arc::from("Istanbul"),
        region_code: Arc::from("34"),
    };
    let records: Vec<EnrichedRecord> = (0..1_000u64)
        .map(|i| EnrichedRecord {
            record: DnsQueryRecord {
                timestamp_ms: 1_557_187_200_000 + i * 1_000,
                server: ServerId::Dns1,
                client_ip: Ipv4Addr::new(10, 0, (i % 4) as u8, 1),
                query_name: ["www.google.com", "youtube.com", "news.example.com"][i as usize % 3]
                    .to_string(),
                query_type: QueryType::A,
                response_code: 0,
            },
            subscriber: (i % 5 != 0).then(|| istanbul.clone()),
            category: Arc::from(if i % 3 == 1 {
                "Video/Streaming"
            } else {
                "Technology/Internet"
            }),
        })
        .collect();

    let (bytes, meta) = encode_segment(&records).expect("single partition");
    println!("records: {}  bytes: {}", meta.record_count, meta.file_len);
    for c in &meta.columns {
        println!(
            "  {:<14} {:<12} offset={:>6} length={:>6}",
            c.name,
            c.encoding.name(),
            c.offset,
            c.length
        );
    }
    let naive = records
        .iter()
        .map(|r| r.record.to_line().len())
        .sum::<usize>();
    println!("raw log text for the same records: {naive} bytes");

    assert_eq!(decode_segment(&bytes).expect("valid segment"), records);
    assert_eq!(decode_meta(&bytes).expect("valid meta"), meta);

    let mut corrupt = bytes.clone();
    corrupt[20] ^= 0x40;
    match decode_meta(&corrupt) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("flipped byte 20: {e}"),
    }
}
