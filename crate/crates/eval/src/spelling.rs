//! Embedded British→American spelling table, American canonical.
//!
//! Two sources: a verb list whose -ise/-ised/-ising/-isation/-isations
//! forms are generated mechanically, and an explicit pair list for
//! everything irregular (-our, -re, -yse, ae/oe medical vocabulary,
//! doubled-l past tenses, and assorted one-offs). Only unambiguous
//! mappings are included; words that are also valid American spellings
//! (advertise, glamour, dialogue, ...) are deliberately absent.

use std::collections::HashMap;
use std::sync::OnceLock;

/// Verbs where British -ise is American -ize; inflections are generated.
const ISE_VERBS: &[&str] = &[
    "apologise", "authorise", "capitalise", "categorise", "catheterise", "cauterise",
    "characterise", "civilise", "colonise", "criticise", "customise", "emphasise", "equalise",
    "familiarise", "fertilise", "finalise", "generalise", "harmonise", "hospitalise", "hypnotise",
    "immobilise", "immunise", "individualise", "industrialise", "itemise", "legalise", "localise",
    "magnetise", "maximise", "memorise", "minimise", "mobilise", "modernise", "monopolise",
    "moralise", "nationalise", "naturalise", "nebulise", "neutralise", "normalise", "optimise",
    "organise", "oxidise", "pasteurise", "patronise", "penalise", "personalise", "popularise",
    "prioritise", "privatise", "publicise", "pulverise", "randomise", "rationalise", "realise",
    "recognise", "reorganise", "revolutionise", "sanitise", "scrutinise", "sensitise",
    "serialise", "socialise", "specialise", "stabilise", "standardise", "sterilise", "stigmatise",
    "subsidise", "summarise", "symbolise", "sympathise", "synchronise", "synthesise",
    "systematise", "terrorise", "theorise", "urbanise", "utilise", "vandalise", "vaporise",
    "verbalise", "victimise", "visualise", "vocalise", "westernise",
];

/// Everything that does not follow the plain -ise pattern.
const EXPLICIT_PAIRS: &[(&str, &str)] = &[
    // -our -> -or
    ("arbour", "arbor"), ("ardour", "ardor"), ("armour", "armor"), ("armoured", "armored"),
    ("behaviour", "behavior"), ("behavioural", "behavioral"), ("behaviours", "behaviors"),
    ("candour", "candor"), ("clamour", "clamor"), ("colour", "color"), ("coloured", "colored"),
    ("colourful", "colorful"), ("colouring", "coloring"), ("colours", "colors"),
    ("demeanour", "demeanor"), ("discolour", "discolor"), ("discolouration", "discoloration"),
    ("discoloured", "discolored"), ("endeavour", "endeavor"), ("endeavours", "endeavors"),
    ("favour", "favor"), ("favourable", "favorable"), ("favoured", "favored"),
    ("favourite", "favorite"), ("favourites", "favorites"), ("favours", "favors"),
    ("flavour", "flavor"), ("flavoured", "flavored"), ("flavouring", "flavoring"),
    ("flavours", "flavors"), ("harbour", "harbor"), ("harbours", "harbors"),
    ("honour", "honor"), ("honourable", "honorable"), ("honoured", "honored"),
    ("honours", "honors"), ("humour", "humor"), ("humoured", "humored"), ("humours", "humors"),
    ("labour", "labor"), ("laboured", "labored"), ("labourer", "laborer"), ("labours", "labors"),
    ("neighbour", "neighbor"), ("neighbourhood", "neighborhood"),
    ("neighbouring", "neighboring"), ("neighbours", "neighbors"), ("odour", "odor"),
    ("odours", "odors"), ("parlour", "parlor"), ("rancour", "rancor"), ("rigour", "rigor"),
    ("rigours", "rigors"), ("rumour", "rumor"), ("rumours", "rumors"), ("saviour", "savior"),
    ("savour", "savor"), ("savoury", "savory"), ("splendour", "splendor"), ("succour", "succor"),
    ("tumour", "tumor"), ("tumours", "tumors"), ("valour", "valor"), ("vapour", "vapor"),
    ("vapours", "vapors"), ("vigour", "vigor"),
    // -re -> -er
    ("calibre", "caliber"), ("calibres", "calibers"), ("centimetre", "centimeter"),
    ("centimetres", "centimeters"), ("centre", "center"), ("centred", "centered"),
    ("centres", "centers"), ("decilitre", "deciliter"), ("decilitres", "deciliters"),
    ("fibre", "fiber"), ("fibres", "fibers"), ("goitre", "goiter"), ("kilometre", "kilometer"),
    ("kilometres", "kilometers"), ("litre", "liter"), ("litres", "liters"),
    ("louvre", "louver"), ("lustre", "luster"), ("manoeuvre", "maneuver"),
    ("manoeuvres", "maneuvers"), ("meagre", "meager"), ("metre", "meter"), ("metres", "meters"),
    ("microlitre", "microliter"), ("microlitres", "microliters"), ("millilitre", "milliliter"),
    ("millilitres", "milliliters"), ("millimetre", "millimeter"),
    ("millimetres", "millimeters"), ("mitre", "miter"), ("ochre", "ocher"), ("sabre", "saber"),
    ("sceptre", "scepter"), ("sombre", "somber"), ("spectre", "specter"),
    ("theatre", "theater"), ("theatres", "theaters"), ("titre", "titer"),
    // -yse -> -yze
    ("analyse", "analyze"), ("analysed", "analyzed"), ("analyser", "analyzer"),
    ("analysers", "analyzers"), ("analysing", "analyzing"), ("breathalyse", "breathalyze"),
    ("breathalyser", "breathalyzer"), ("catalyse", "catalyze"), ("catalysed", "catalyzed"),
    ("dialyse", "dialyze"), ("dialysed", "dialyzed"), ("electrolyse", "electrolyze"),
    ("hydrolyse", "hydrolyze"), ("hydrolysed", "hydrolyzed"), ("paralyse", "paralyze"),
    ("paralysed", "paralyzed"), ("paralysing", "paralyzing"),
    // ae/oe, mostly clinical vocabulary
    ("anaemia", "anemia"), ("anaemic", "anemic"), ("anaesthesia", "anesthesia"),
    ("anaesthesiology", "anesthesiology"), ("anaesthetic", "anesthetic"),
    ("anaesthetics", "anesthetics"), ("anaesthetise", "anesthetize"),
    ("anaesthetised", "anesthetized"), ("anaesthetising", "anesthetizing"),
    ("anaesthetist", "anesthetist"), ("apnoea", "apnea"), ("bacteraemia", "bacteremia"),
    ("caesarean", "cesarean"), ("coeliac", "celiac"), ("diarrhoea", "diarrhea"),
    ("dyspnoea", "dyspnea"), ("encyclopaedia", "encyclopedia"), ("faecal", "fecal"),
    ("faeces", "feces"), ("foetal", "fetal"), ("foetus", "fetus"), ("foetuses", "fetuses"),
    ("gynaecological", "gynecological"), ("gynaecologist", "gynecologist"),
    ("gynaecology", "gynecology"), ("haematologist", "hematologist"),
    ("haematology", "hematology"), ("haematoma", "hematoma"), ("haemodialysis", "hemodialysis"),
    ("haemodynamic", "hemodynamic"), ("haemoglobin", "hemoglobin"),
    ("haemophilia", "hemophilia"), ("haemorrhage", "hemorrhage"),
    ("haemorrhages", "hemorrhages"), ("haemorrhagic", "hemorrhagic"),
    ("haemorrhoid", "hemorrhoid"), ("haemorrhoids", "hemorrhoids"),
    ("haemostasis", "hemostasis"), ("homoeopathic", "homeopathic"),
    ("homoeopathy", "homeopathy"), ("hyperglycaemia", "hyperglycemia"),
    ("hyperglycaemic", "hyperglycemic"), ("hypoglycaemia", "hypoglycemia"),
    ("hypoglycaemic", "hypoglycemic"), ("hypoxaemia", "hypoxemia"), ("ischaemia", "ischemia"),
    ("ischaemic", "ischemic"), ("leukaemia", "leukemia"), ("mediaeval", "medieval"),
    ("oedema", "edema"), ("oedematous", "edematous"), ("oesophageal", "esophageal"),
    ("oesophagitis", "esophagitis"), ("oesophagus", "esophagus"), ("oestrogen", "estrogen"),
    ("orthopaedic", "orthopedic"), ("orthopaedics", "orthopedics"), ("paediatric", "pediatric"),
    ("paediatrician", "pediatrician"), ("paediatricians", "pediatricians"),
    ("paediatrics", "pediatrics"), ("septicaemia", "septicemia"), ("toxaemia", "toxemia"),
    ("uraemia", "uremia"),
    // doubled l
    ("cancelled", "canceled"), ("cancelling", "canceling"), ("channelled", "channeled"),
    ("channelling", "channeling"), ("counselled", "counseled"), ("counselling", "counseling"),
    ("counsellor", "counselor"), ("counsellors", "counselors"), ("dialled", "dialed"),
    ("dialling", "dialing"), ("equalled", "equaled"), ("equalling", "equaling"),
    ("fuelled", "fueled"), ("fuelling", "fueling"), ("grovelled", "groveled"),
    ("initialled", "initialed"), ("jewellery", "jewelry"), ("labelled", "labeled"),
    ("labelling", "labeling"), ("levelled", "leveled"), ("levelling", "leveling"),
    ("marvelled", "marveled"), ("marvellous", "marvelous"), ("modelled", "modeled"),
    ("modelling", "modeling"), ("panelled", "paneled"), ("panelling", "paneling"),
    ("pedalled", "pedaled"), ("quarrelled", "quarreled"), ("quarrelling", "quarreling"),
    ("rivalled", "rivaled"), ("shovelled", "shoveled"), ("shrivelled", "shriveled"),
    ("signalled", "signaled"), ("signalling", "signaling"), ("swivelled", "swiveled"),
    ("totalled", "totaled"), ("totalling", "totaling"), ("travelled", "traveled"),
    ("traveller", "traveler"), ("travellers", "travelers"), ("travelling", "traveling"),
    ("tunnelled", "tunneled"), ("tunnelling", "tunneling"), ("unravelled", "unraveled"),
    ("tranquillise", "tranquilize"), ("tranquillised", "tranquilized"),
    ("tranquilliser", "tranquilizer"), ("tranquillisers", "tranquilizers"),
    ("tranquillity", "tranquility"),
    // -ce/-se and assorted one-offs
    ("aeroplane", "airplane"), ("aeroplanes", "airplanes"), ("ageing", "aging"),
    ("aluminium", "aluminum"), ("amongst", "among"), ("analogue", "analog"),
    ("analogues", "analogs"), ("artefact", "artifact"), ("artefacts", "artifacts"),
    ("catalogue", "catalog"), ("catalogues", "catalogs"), ("cataloguing", "cataloging"),
    ("cheque", "check"), ("chequered", "checkered"), ("cheques", "checks"),
    ("defence", "defense"), ("defences", "defenses"), ("distil", "distill"),
    ("distils", "distills"), ("draught", "draft"), ("draughts", "drafts"),
    ("draughty", "drafty"), ("enquire", "inquire"), ("enquired", "inquired"),
    ("enquiries", "inquiries"), ("enquiry", "inquiry"), ("enrol", "enroll"),
    ("enrolment", "enrollment"), ("enrols", "enrolls"), ("fulfil", "fulfill"),
    ("fulfilment", "fulfillment"), ("fulfils", "fulfills"), ("gaol", "jail"),
    ("gramme", "gram"), ("grammes", "grams"), ("grey", "gray"), ("greyish", "grayish"),
    ("instalment", "installment"), ("instalments", "installments"), ("instil", "instill"),
    ("kerb", "curb"), ("kerbs", "curbs"), ("kilogramme", "kilogram"),
    ("kilogrammes", "kilograms"), ("learnt", "learned"), ("licence", "license"),
    ("licences", "licenses"), ("milligramme", "milligram"), ("moustache", "mustache"),
    ("mould", "mold"), ("moulded", "molded"), ("moulding", "molding"), ("moulds", "molds"),
    ("mouldy", "moldy"), ("moult", "molt"), ("offence", "offense"), ("offences", "offenses"),
    ("plough", "plow"), ("ploughed", "plowed"), ("ploughs", "plows"),
    ("practise", "practice"), ("practised", "practiced"), ("practising", "practicing"),
    ("pretence", "pretense"), ("programme", "program"), ("programmes", "programs"),
    ("pyjamas", "pajamas"), ("skilful", "skillful"), ("smoulder", "smolder"),
    ("smouldering", "smoldering"), ("spilt", "spilled"), ("storey", "story"),
    ("storeys", "stories"), ("sulphate", "sulfate"), ("sulphates", "sulfates"),
    ("sulphide", "sulfide"), ("sulphides", "sulfides"), ("sulphur", "sulfur"),
    ("sulphuric", "sulfuric"), ("tyre", "tire"), ("tyres", "tires"), ("whilst", "while"),
    ("wilful", "willful"),
];

fn table() -> &'static HashMap<String, String> {
    static TABLE: OnceLock<HashMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for verb in ISE_VERBS {
            let stem = &verb[..verb.len() - 3];
            map.insert(format!("{stem}ise"), format!("{stem}ize"));
            map.insert(format!("{stem}ised"), format!("{stem}ized"));
            map.insert(format!("{stem}ises"), format!("{stem}izes"));
            map.insert(format!("{stem}ising"), format!("{stem}izing"));
            map.insert(format!("{stem}isation"), format!("{stem}ization"));
            map.insert(format!("{stem}isations"), format!("{stem}izations"));
        }
        for (uk, us) in EXPLICIT_PAIRS {
            map.insert((*uk).to_string(), (*us).to_string());
        }
        map
    })
}

/// American spelling for a lowercase `word`, when the table maps it.
pub fn to_american(word: &str) -> Option<&'static str> {
    table().get(word).map(|s| s.as_str())
}

/// Number of mapped pairs.
pub fn table_len() -> usize {
    table().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_mappings() {
        assert_eq!(to_american("colour"), Some("color"));
        assert_eq!(to_american("organise"), Some("organize"));
        assert_eq!(to_american("organisation"), Some("organization"));
        assert_eq!(to_american("anaesthesia"), Some("anesthesia"));
        assert_eq!(to_american("paediatric"), Some("pediatric"));
        assert_eq!(to_american("haemorrhage"), Some("hemorrhage"));
        assert_eq!(to_american("litre"), Some("liter"));
        assert_eq!(to_american("color"), None);
    }

    #[test]
    fn american_side_never_appears_as_a_key() {
        for (_, us) in EXPLICIT_PAIRS {
            assert!(to_american(us).is_none(), "chain through {us}");
        }
    }

    #[test]
    fn table_is_substantial() {
        assert!(table_len() >= 450, "only {} pairs", table_len());
    }
}
