//! Round-trip the arm through its JSON model document and check it.

use servokin::robot_model::{default_iiwa14, load_model, save_model, validate_model};

fn main() {
    let model = default_iiwa14();
    let text = save_model(&model);
    println!("{text}");
    let back = load_model(&text).expect("own output parses");
    println!("round trip identical: {}", back == model);
    println!("diagnostics: {:?}", validate_model(&back));
    println!("segment sum {:.3} m", back.links.segment_sum());
}
