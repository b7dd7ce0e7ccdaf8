use std::net::{IpAddr, Ipv4Addr};
use std::sync::Arc;

use photoauth_core::service::{Config, Service, WireRequest};
use photoauth_core::session::{ManualClock, Preference};
use photoauth_core::synth::{
    export_corpus_jsonl, generate_layout, simulate_detection, CorpusParams, DetectorProfile, LayoutVariant, Theme,
};
use photoauth_core::verify::{AcceptSet, PhotoAnalysis};
use photoauth_core::DomainName;

const PC: IpAddr = IpAddr::V4(Ipv4Addr::new(192, 0, 2, 10));
const PHONE: IpAddr = IpAddr::V4(Ipv4Addr::new(192, 0, 2, 77));

fn service(seed: u64) -> Service {
    let mut c = Config::new(&["microsoft.com", "www.microsoft.com"]);
    c.users.insert("bob".into(), Preference::Email);
    c.seed = seed;
    // corpus replay below clicks many links from one phone
    c.lookups_per_second = None;
    Service::new(&c, Arc::new(ManualClock::new(0))).unwrap()
}

/// Logs in and opens the link on the phone; returns the upload path.
fn start(s: &Service) -> String {
    let (r, notes) = s.handle_with_notifications(&WireRequest::new("POST", "/login", PC).with_body(r#"{"username":"bob"}"#));
    assert_eq!(r.body["status"], "link-sent");
    let link = &notes[0].link;
    let path = link[link.find("/c/").unwrap()..].to_string();
    let r = s.handle(&WireRequest::new("GET", &path, PHONE));
    assert_eq!(r.body["status"], "photo-required");
    r.body["upload"].as_str().unwrap().to_string()
}

fn photo(domain: &str, variant: LayoutVariant, seed: u64) -> String {
    let layout = generate_layout(&DomainName::parse(domain).unwrap(), Theme::Light, &variant, seed);
    simulate_detection(&layout, &DetectorProfile::oracle()).to_json()
}

#[test]
fn synthetic_photos_through_the_wire() {
    let s = service(1);
    for seed in 0..30 {
        let upload = start(&s);
        let r = s.handle(&WireRequest::new("POST", &upload, PHONE).with_body(photo("www.microsoft.com", LayoutVariant::Genuine, seed)));
        assert_eq!(r.body["status"], "authorized", "seed {seed}");

        let upload = start(&s);
        let r = s.handle(
            &WireRequest::new("POST", &upload, PHONE)
                .with_body(photo("microsoft1.com", LayoutVariant::TitleInjection("microsoft.com".into()), seed)),
        );
        assert_eq!(r.body["status"], "denied", "seed {seed}");
        assert_eq!(r.body["reason"], "phishing-detected");

        let upload = start(&s);
        let r = s.handle(
            &WireRequest::new("POST", &upload, PHONE)
                .with_body(photo("microsoft1.com", LayoutVariant::PictureInPicture("microsoft.com".into()), seed)),
        );
        assert_eq!(r.body["status"], "retake");
        assert_eq!(r.body["reason"], "multiple-addrbars");
        assert_eq!(r.body["warning"], true);
    }
}

#[test]
fn photos_at_other_resolutions_are_rescaled() {
    let s = service(2);
    let upload = start(&s);
    // a 4000x3000 capture of the bar region, scaled 0.48 down to 1920x1440
    let body = r#"{"resolution":{"w":4000,"h":3000},
        "texts":[{"x":500,"y":220,"w":900,"h":60,"text":"https://microsoft.com/"}],
        "addrbars":[{"x":300,"y":200,"w":3000,"h":100,"confidence":0.9}]}"#;
    let r = s.handle(&WireRequest::new("POST", &upload, PHONE).with_body(body));
    assert_eq!(r.body["status"], "authorized");
}

#[test]
fn exported_corpus_replays_against_a_server() {
    let accept = AcceptSet::new([DomainName::parse("microsoft.com").unwrap(), DomainName::parse("www.microsoft.com").unwrap()]).unwrap();
    let corpus = export_corpus_jsonl(40, &CorpusParams::default(), &DetectorProfile::oracle(), &accept);
    let s = service(3);
    let mut n = 0;
    for line in corpus.lines() {
        PhotoAnalysis::from_json(line).unwrap();
        let upload = start(&s);
        let r = s.handle(&WireRequest::new("POST", &upload, PHONE).with_body(line));
        assert_eq!(r.body["status"], "authorized");
        n += 1;
    }
    assert_eq!(n, 40);
}

#[test]
fn recorded_log_replays_byte_for_byte() {
    let run = |s: &Service| {
        let mut out = Vec::new();
        let upload = start(s);
        for seed in 0..3 {
            let body = photo("microsoft1.com", LayoutVariant::PictureInPicture("microsoft.com".into()), seed);
            out.push(serde_json::to_string(&s.handle(&WireRequest::new("POST", &upload, PHONE).with_body(body))).unwrap());
        }
        out.push(serde_json::to_string(&s.handle(&WireRequest::new("POST", "/login", PC).with_body(r#"{"username":"bob"}"#))).unwrap());
        out
    };
    assert_eq!(run(&service(9)), run(&service(9)));
}
