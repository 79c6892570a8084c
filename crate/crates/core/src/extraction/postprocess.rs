use crate::triplet::SactTriplet;

const TIME_FILLERS: &[&str] = &["approximately", "about", "around", "in"];

/// Output cleanup for thinking-mode extractions:
///
/// 1. a SACT mention with a token containing `chemo` loses every token
///    before the first such token (`neoadjuvant chemo` -> `chemo`);
/// 2. a slash-joined mention is split into one triplet per non-empty
///    component, each sharing relation and time;
/// 3. the standalone words approximately, about, around and in are removed
///    from the time expression.
///
/// Rule 1 is applied again to each split component so that the whole
/// transformation is idempotent. Triplets whose time becomes empty are
/// dropped.
pub fn postprocess_triplets(triplets: &[SactTriplet]) -> Vec<SactTriplet> {
    let mut out = Vec::with_capacity(triplets.len());
    for t in triplets {
        let sact = strip_before_chemo(t.sact());
        let time = strip_time_fillers(t.time_raw());
        for component in split_slash(sact) {
            let component = strip_before_chemo(component);
            if let Ok(t) = SactTriplet::new(component, t.relation(), time.as_ref()) {
                out.push(t);
            }
        }
    }
    out
}

fn strip_before_chemo(sact: &str) -> &str {
    let mut offset = 0;
    for (i, token) in sact.split_whitespace().enumerate() {
        let at = offset + sact[offset..].find(token).expect("token comes from sact");
        if token.to_lowercase().contains("chemo") {
            return if i == 0 { sact } else { &sact[at..] };
        }
        offset = at + token.len();
    }
    sact
}

fn split_slash(sact: &str) -> Vec<&str> {
    if !sact.contains('/') {
        return vec![sact];
    }
    sact.split('/')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .collect()
}

fn strip_time_fillers(time: &str) -> std::borrow::Cow<'_, str> {
    let is_filler = |tok: &str| TIME_FILLERS.contains(&tok.to_lowercase().as_str());
    if !time.split_whitespace().any(is_filler) {
        return time.into();
    }
    time.split_whitespace()
        .filter(|tok| !is_filler(tok))
        .collect::<Vec<_>>()
        .join(" ")
        .into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplet::Relation;

    fn t(s: &str, r: Relation, time: &str) -> SactTriplet {
        SactTriplet::new(s, r, time).unwrap()
    }

    #[test]
    fn slash_split() {
        assert_eq!(
            postprocess_triplets(&[t(
                "Doxorubicin/Cyclophosphamide",
                Relation::Contains,
                "today"
            )]),
            vec![
                t("Doxorubicin", Relation::Contains, "today"),
                t("Cyclophosphamide", Relation::Contains, "today")
            ]
        );
    }

    #[test]
    fn descriptor_and_filler() {
        assert_eq!(
            postprocess_triplets(&[t(
                "neoadjuvant chemo",
                Relation::BeginsOn,
                "approximately 3 weeks ago"
            )]),
            vec![t("chemo", Relation::BeginsOn, "3 weeks ago")]
        );
        assert_eq!(
            postprocess_triplets(&[t("adjuvant chemotherapy", Relation::Contains, "2011")]),
            vec![t("chemotherapy", Relation::Contains, "2011")]
        );
        assert_eq!(
            postprocess_triplets(&[t(
                "high dose Chemotherapy",
                Relation::Contains,
                "in January"
            )]),
            vec![t("Chemotherapy", Relation::Contains, "January")]
        );
    }

    #[test]
    fn untouched() {
        let x = t("Taxol", Relation::Contains, "7/20/2012");
        assert_eq!(postprocess_triplets(std::slice::from_ref(&x)), vec![x]);
    }

    #[test]
    fn degenerate_slashes() {
        assert_eq!(
            postprocess_triplets(&[t("A/", Relation::Contains, "today")]),
            vec![t("A", Relation::Contains, "today")]
        );
        assert!(postprocess_triplets(&[t("/", Relation::Contains, "today")]).is_empty());
        assert!(postprocess_triplets(&[t("Taxol", Relation::Contains, "around")]).is_empty());
    }

    #[test]
    fn chemo_is_first_or_repeated() {
        let x = t("chemo regimen", Relation::Contains, "today");
        assert_eq!(postprocess_triplets(std::slice::from_ref(&x)), vec![x]);
        assert_eq!(
            postprocess_triplets(&[t("adjuvant chemo then chemo", Relation::Contains, "today")]),
            vec![t("chemo then chemo", Relation::Contains, "today")]
        );
    }

    #[test]
    fn chemo_inside_slash_component() {
        let once = postprocess_triplets(&[t(
            "chemo/neoadjuvant chemo",
            Relation::Contains,
            "about 2012",
        )]);
        assert_eq!(
            once,
            vec![
                t("chemo", Relation::Contains, "2012"),
                t("chemo", Relation::Contains, "2012")
            ]
        );
        assert_eq!(postprocess_triplets(&once), once);
    }
}
