//! Fixed prompt texts and request builders for bibliography extraction and
//! few-shot citation annotation.

use serde::{Deserialize, Serialize};

use super::chat::{ChatMessage, ChatRequest, SamplingParams};

pub const EXTRACTION_SYSTEM_PROMPT: &str = "You are an expert annotator that specializes in reading academic articles and isolating their bibliography. You will see the text of an academic article and you should write out a list of the references from the article bibliography, one on each line. Copy the references verbatim. Respond only with the list of references, no other text. Do not include bullet points or numbered lists, but edit the formatting so each citation fits on exactly one line. Do not include parenthetical citations. Just focus on the bibliography section.";

const ANNOTATION_PREAMBLE: &str = "You are a helpful assistant with an expertise in annotating bibliographic references in JATS XML format.";

const NO_COT_INSTRUCTION: &str = "You will be given a plaintext citation and you should respond with the annotated reference. ONLY respond with the annotation and nothing else.";

const COT_INSTRUCTION: &str = "You will be given a plaintext citation and you should respond with the annotated reference. Before providing the final XML annotation, give your step-by-step thinking. After your explanation, provide the final XML annotation.";

pub const STONE_CITATION: &str = "Stone NJ, Robinson JG, Lichtenstein AH, et al. 2013 ACC/AHA Guideline on the Treatment of Blood Cholesterol to Reduce Atherosclerotic Cardiovascular Risk in Adults: A Report of the American College of Cardiology/American Heart Association Task Force on Practice Guidelines. Circulation 2014;129(25 Suppl 2):S1-S45. doi:10.1161/01.cir.0000437738.63853.7a.";

pub const STONE_ANNOTATION: &str = r#"<mixed-citation publication-type="journal"><person-group person-group-type="author"><string-name><surname>Stone</surname> <given-names>NJ</given-names></string-name>, <string-name><surname>Robinson</surname> <given-names>JG</given-names></string-name>, <string-name><surname>Lichtenstein</surname> <given-names>AH</given-names></string-name>, <etal>et al</etal></person-group>. <article-title>2013 ACC/AHA Guideline on the Treatment of Blood Cholesterol to Reduce Atherosclerotic Cardiovascular Risk in Adults: A Report of the American College of Cardiology/American Heart Association Task Force on Practice Guidelines</article-title>. <source><italic>Circulation</italic></source> <year>2014</year>;<volume>129</volume>(<issue>25</issue> <supplement>Suppl 2</supplement>):<fpage>S1</fpage>-<lpage>S45</lpage>. <comment>doi</comment>:<pub-id pub-id-type="doi">10.1161/01.cir.0000437738.63853.7a</pub-id>.</mixed-citation>"#;

pub const SAGEL_CITATION: &str = "Sagel Z, Tutluer Mİ, Peskircioglu H, et al.: Determination of Effect of Chemical Mutagen EMS on TAEK A-3 and TAEK C-10 Mutant Soybean Varieties in M1 Generation. Ekin Journal of Crop Breeding and Genetics. 2017; 3(1): 19–24. Reference Source";

pub const SAGEL_ANNOTATION: &str = r#"<mixed-citation publication-type="journal"><person-group person-group-type="author"><name name-style="western"><surname>Sagel</surname> <given-names>Z</given-names></name>, <name name-style="western"><surname>Tutluer</surname> <given-names>Mİ</given-names></name>, <name name-style="western"><surname>Peskircioglu</surname>, <given-names>H</given-names></name>, <etal /></person-group>:<article-title>Determination of Effect of Chemical Mutagen EMS on TAEK A-3 and TAEK C-10 Mutant Soybean Varieties in M<sub>1</sub> Generation.</article-title>. <source><italic toggle="yes">Ekin Journal of Crop Breeding and Genetics</italic></source>. <year>2017</year>;<volume>3</volume>(<issue>1</issue>): <fpage>19</fpage>–<lpage>24</lpage>. <ext-link>Reference Source</ext-link></mixed-citation>"#;

/// Few-shot demonstrations embedded in both annotation prompts.
pub const FEW_SHOT_EXAMPLES: [(&str, &str); 2] = [
    (STONE_CITATION, STONE_ANNOTATION),
    (SAGEL_CITATION, SAGEL_ANNOTATION),
];

/// Prefill that closes a reasoning model's thinking block before it starts.
pub const EMPTY_THINK: &str = "<think></think>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Cot,
    NoCot,
}

impl PromptMode {
    pub fn sampling(self) -> SamplingParams {
        match self {
            PromptMode::Cot => SamplingParams::cot(),
            PromptMode::NoCot => SamplingParams::no_cot(),
        }
    }
}

pub fn annotation_system_prompt(mode: PromptMode) -> String {
    let instruction = match mode {
        PromptMode::Cot => COT_INSTRUCTION,
        PromptMode::NoCot => NO_COT_INSTRUCTION,
    };
    let mut prompt = format!("{ANNOTATION_PREAMBLE}\n\n{instruction}\n\n# Examples");
    for (citation, annotation) in FEW_SHOT_EXAMPLES {
        prompt.push_str("\n\n### Citation\n\n");
        prompt.push_str(citation);
        prompt.push_str("\n\n### Annotation\n\n");
        prompt.push_str(annotation);
    }
    prompt
}

/// Request asking `model` to annotate one plaintext citation.
///
/// Reasoning models in direct mode get an empty think block as prefill so
/// they answer without reasoning.
pub fn build_annotation_prompt(
    model: &str,
    citation: &str,
    mode: PromptMode,
    reasoning_model: bool,
) -> ChatRequest {
    let prefill = (mode == PromptMode::NoCot && reasoning_model).then(|| EMPTY_THINK.to_owned());
    ChatRequest {
        model: model.to_owned(),
        messages: vec![
            ChatMessage::system(annotation_system_prompt(mode)),
            ChatMessage::user(citation),
        ],
        sampling: mode.sampling(),
        prefill,
    }
}

/// Request asking `model` to list an article's references, one per line.
pub fn build_extraction_prompt(model: &str, markdown: &str) -> ChatRequest {
    ChatRequest {
        model: model.to_owned(),
        messages: vec![
            ChatMessage::system(EXTRACTION_SYSTEM_PROMPT),
            ChatMessage::user(markdown),
        ],
        sampling: SamplingParams::greedy(),
        prefill: None,
    }
}
