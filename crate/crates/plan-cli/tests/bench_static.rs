use plan_cli::scenario::Scenario;
use plan_cli::sim;

#[test]
fn timing_distribution() {
    let text = include_str!("../../../scenarios/timing.json");
    let scenario = Scenario::parse(text).unwrap();
    let result = sim::run(&scenario).unwrap();
    let mut s: Vec<f64> = result.cycles.iter().map(|c| c.t_static).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("static median {:.2} ms p90 {:.2} p99 {:.2} max {:.2}",
        s[s.len()/2]*1e3, s[(s.len()*9)/10]*1e3, s[(s.len()*99)/100-1]*1e3, s.last().unwrap()*1e3);
    let mut o: Vec<f64> = result.cycles.iter().map(|c| c.t_optimization).collect();
    o.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("opt median {:.2} ms p99 {:.2}", o[o.len()/2]*1e3, o[(o.len()*99)/100-1]*1e3);
}
