//! Calendar context: US holidays, month arithmetic, and payday schedules.

use chrono::{Datelike, Duration, NaiveDate, Weekday};

/// Last day of the month containing `date`.
pub fn last_day_of_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 {
        (year + 1, 1)
    } else {
        (year, month + 1)
    };
    (NaiveDate::from_ymd_opt(ny, nm, 1).unwrap() - Duration::days(1)).day()
}

/// True if `date` is the last calendar day of its month.
pub fn is_month_end(date: NaiveDate) -> bool {
    date.day() == last_day_of_month(date.year(), date.month())
}

/// `months` months after the (year, month) of `date`, keeping the requested
/// day-of-month; days 29-31 clamp to the target month's last day.
pub fn add_months_clamped(date: NaiveDate, months: u32, day_of_month: u32) -> NaiveDate {
    let total = date.year() * 12 + date.month() as i32 - 1 + months as i32;
    let year = total.div_euclid(12);
    let month = total.rem_euclid(12) as u32 + 1;
    let day = day_of_month.min(last_day_of_month(year, month));
    NaiveDate::from_ymd_opt(year, month, day).unwrap()
}

/// First date on or after `start` whose day-of-month is `day_of_month`
/// (clamped to short months).
pub fn first_occurrence_on_or_after(start: NaiveDate, day_of_month: u32) -> NaiveDate {
    let this_month = NaiveDate::from_ymd_opt(
        start.year(),
        start.month(),
        day_of_month.min(last_day_of_month(start.year(), start.month())),
    )
    .unwrap();
    if this_month >= start {
        this_month
    } else {
        add_months_clamped(start, 1, day_of_month)
    }
}

fn nth_weekday_of_month(year: i32, month: u32, weekday: Weekday, nth: u32) -> NaiveDate {
    let first = NaiveDate::from_ymd_opt(year, month, 1).unwrap();
    let offset = (7 + weekday.num_days_from_monday() - first.weekday().num_days_from_monday()) % 7;
    first + Duration::days(offset as i64 + 7 * (nth as i64 - 1))
}

fn last_weekday_of_month(year: i32, month: u32, weekday: Weekday) -> NaiveDate {
    let last = NaiveDate::from_ymd_opt(year, month, last_day_of_month(year, month)).unwrap();
    let offset = (7 + last.weekday().num_days_from_monday() - weekday.num_days_from_monday()) % 7;
    last - Duration::days(offset as i64)
}

/// Holiday name for `date`, if any. US federal holidays plus Christmas Eve
/// and New Year's Eve, computed for any year.
pub fn holiday_name(date: NaiveDate) -> Option<&'static str> {
    let (y, m, d) = (date.year(), date.month(), date.day());
    match (m, d) {
        (1, 1) => return Some("New Year's Day"),
        (6, 19) => return Some("Juneteenth"),
        (7, 4) => return Some("Independence Day"),
        (11, 11) => return Some("Veterans Day"),
        (12, 24) => return Some("Christmas Eve"),
        (12, 25) => return Some("Christmas"),
        (12, 31) => return Some("New Year's Eve"),
        _ => {}
    }
    if date == nth_weekday_of_month(y, 1, Weekday::Mon, 3) {
        return Some("Martin Luther King Jr. Day");
    }
    if date == nth_weekday_of_month(y, 2, Weekday::Mon, 3) {
        return Some("Presidents' Day");
    }
    if date == last_weekday_of_month(y, 5, Weekday::Mon) {
        return Some("Memorial Day");
    }
    if date == nth_weekday_of_month(y, 9, Weekday::Mon, 1) {
        return Some("Labor Day");
    }
    if date == nth_weekday_of_month(y, 10, Weekday::Mon, 2) {
        return Some("Columbus Day");
    }
    if date == nth_weekday_of_month(y, 11, Weekday::Thu, 4) {
        return Some("Thanksgiving");
    }
    None
}

pub fn is_holiday(date: NaiveDate) -> bool {
    holiday_name(date).is_some()
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Semi-monthly paydays: the 1st and 15th of every month.
pub const PAYDAYS: [u32; 2] = [1, 15];

pub fn is_payday(date: NaiveDate) -> bool {
    PAYDAYS.contains(&date.day())
}

/// Paydays within `[start, end]` inclusive.
pub fn paydays_in_range(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut d = start;
    while d <= end {
        if is_payday(d) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Upcoming paydays strictly useful for liquidity lookahead: the next `n`
/// paydays on or after `date`.
pub fn next_paydays(date: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = date;
    while out.len() < n {
        if is_payday(d) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}
