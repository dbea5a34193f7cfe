use stance_core::lexicon::GroupName;
use GroupName::*;

/// Annotated example sentences with the groups the shipped lexicon must
/// assign them.
pub const GOLDENS: &[(&str, &[GroupName])] = &[
    ("Massiimmigratsioon oleks Euroopale hukatuslik ja see ei lahendaks maailmas mitte midagi.", &[Migration]),
    ("Vähegi kahtlased siin viibivad migrandid tuleb turvalisuse huvides Eestist välja saata.", &[Migration]),
    ("Demokraadid süüdistavad administratsiooni pandeemia kasutamises sisserände vastu.", &[Migration]),
    ("70% ettevõtte töötajatest on välismaalased.", &[ForeignWorkers]),
    ("Protsess, et saada siin elamisluba, ei olnud väga keeruline.", &[Noncitizens]),
    (
        "Hispaania valitsus teatas teisipäeval, et lihtsustab reegleid migrantidele ja töötutele põllumajanduses töö saamiseks koroonaviiruse pandeemia ajal.",
        &[Migration],
    ),
    (
        "Jääb vaid küsida — millal ka liibüalased käega löövad ja toimuval vabavoolus minna lasevad, kui Euroopa vaid räägib rändekriisi ohjeldamisest, ise aga valab õli tulle?",
        &[Migration],
    ),
    (
        "Kutsuksin mõlemat poolt – nii pagulaste vastuvõtmise tervitajaid kui ka sellega hirmutajaid – mitte andma oma häält vaikijatele.",
        &[Refugees],
    ),
    ("President Macron soovib ümber kujundada suhteid Prantsuse moslemite ja ilmaliku Prantsuse riigi vahel.", &[Ethnicity]),
    (
        "Loogiliselt võttes ei peaks ükski laev Vahemere! päästma migrandialust, mis liigub omal jõul ega ole otseses uppumisohus – head Euroopasse seilamist!",
        &[Migration],
    ),
    (
        "Kanadas on võimul igati multikultuursust ja sisserännet soodustav Liberaalne partei, mille liider ja riigi peaminister Justin Trudeau on lubanud näiteks oma poegadest feministid kasvatada.",
        &[Migration, RadrightLiberalOpposition],
    ),
    ("Kirja eesmärk oli panna kogu ühiskond üksmeelselt arvama, et Eesti riigil ilma Ukraina võõrtöölised pole tulevikku.", &[ForeignWorkers]),
    ("Nad kritiseerivad rassismi, homovastasust, võõraviha ja nende arvates vananenud rahvuslust.", &[Race]),
    (
        "Uute sõnadega rootsi keeles esitatud versioonis „Lyckolandet“ („Önnemaa“) esitas Strömstedt rassismivastaseid seisukohti ja nimetas mitmeid sisserändevastaseid.",
        &[Migration, Race],
    ),
    (
        "Liitlasriigina peaks Eesti pakkuma abi ka eesseeisval USA lõunapiiri kindlustamisel illegaalsete immigrantide sissetungi vastu, leiab Sinine Äratu.",
        &[Migration, Refugees],
    ),
    (
        "Pagulaste traagiline saatus ja teekond Euroopasse on kõikjal maailmas uudis number 1, sellest hoolimata oleme avastanud, et vihakõnelejad ja provokaatorid segavad arukat debatti, mitte ei püüa leida lahendusi.",
        &[Refugees],
    ),
];

/// Animal migration and migraine sentences the negative filter must drop.
pub const NEGATIVES: &[&str] = &[
    "Varasemalt vaevasid Kristiinat sagedased migreenid, mis võisid naist halvata ja sundida ta terveks päevaks voodisse, kus ainus võimalus hakkama saada oli hoida tekki pea peal ja kõrvasid kinni.",
    "Linnud alustasid rännet lõunasse.",
    "Hanede ränne on alanud.",
    "Kalade ränne jõgedes on sel aastal hilinenud.",
    "Lindude sügisrände ajal on rannik rahvast täis.",
    "Migreen ja peavalu on levinud vaevused.",
];
