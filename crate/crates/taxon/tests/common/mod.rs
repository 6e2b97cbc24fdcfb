#![allow(dead_code)]

use std::sync::Arc;

use chrono::TimeZone;
use taxon::clock::ManualClock;
use taxon::ontology::load_ontology;
use taxon::service::{Service, ServiceConfig};
use taxon::store::Store;
use taxon_core::session::SoundMetadata;
use taxon_core::{CategoryId, SoundResource, Taxonomy, Timestamp};

pub const FIXTURE: &[u8] = include_bytes!("../fixtures/ontology_standin.json");

pub fn taxonomy() -> Taxonomy {
    load_ontology(FIXTURE).unwrap()
}

pub fn epoch() -> Timestamp {
    chrono::Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap()
}

pub fn at(secs: i64) -> Timestamp {
    epoch() + chrono::Duration::seconds(secs)
}

pub fn sound(n: usize) -> SoundResource {
    SoundResource {
        sound_id: format!("snd{n:03}"),
        title: format!("Recording {n}"),
        audio_uri: format!("/audio/snd{n:03}.wav"),
        duration_s: 12.5,
        metadata: SoundMetadata {
            description: format!("uploader notes for recording {n}"),
            tags: vec!["field-recording".into(), format!("tag{n}")],
        },
        spectrogram_uri: Some(format!("/audio/snd{n:03}.png")),
    }
}

pub fn id_of(t: &Taxonomy, name: &str) -> CategoryId {
    let hits: Vec<_> = t.iter().filter(|c| c.name == name).collect();
    assert_eq!(hits.len(), 1, "{name}");
    hits[0].id.clone()
}

/// A store holding the fixture taxonomy and `n` sounds.
pub fn seeded_store(n: usize) -> Store {
    let mut store = Store::in_memory();
    store.set_taxonomy(&taxonomy()).unwrap();
    for i in 1..=n {
        store.put_sound(sound(i)).unwrap();
    }
    store
}

pub fn service(store: Store, config: ServiceConfig) -> (Arc<Service>, Arc<ManualClock>) {
    let clock = Arc::new(ManualClock::new(epoch()));
    let svc = Service::new(store, config, clock.clone()).unwrap();
    (Arc::new(svc), clock)
}
