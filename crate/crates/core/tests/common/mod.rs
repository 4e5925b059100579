#![allow(dead_code)]

use serde_json::Value;

pub fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn get(agent: &ureq::Agent, url: &str) -> (u16, Value) {
    let mut resp = agent.get(url).call().expect("request");
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().expect("json body"))
}

pub fn post(agent: &ureq::Agent, url: &str, body: Value) -> (u16, Value) {
    let mut resp = agent.post(url).send_json(body).expect("request");
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().expect("json body"))
}

pub fn post_empty(agent: &ureq::Agent, url: &str) -> (u16, Value) {
    let mut resp = agent.post(url).send_empty().expect("request");
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().expect("json body"))
}
